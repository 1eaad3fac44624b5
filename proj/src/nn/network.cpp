#include "emseg/nn/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "emseg/parallel.hpp"
#include "emseg/rng.hpp"

namespace emseg::nn {

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

LayerDesc dense(int fan_in, int fan_out) { return {LayerKind::Dense, fan_in, fan_out, 0}; }
LayerDesc conv(int fan_in, int fan_out, int kernel) { return {LayerKind::Conv, fan_in, fan_out, kernel}; }
LayerDesc relu() { return {LayerKind::Relu, 0, 0, 0}; }
LayerDesc sigmoid() { return {LayerKind::Sigmoid, 0, 0, 0}; }
LayerDesc max_pool() { return {LayerKind::MaxPool, 0, 0, 0}; }
LayerDesc upsample() { return {LayerKind::Upsample, 0, 0, 0}; }
LayerDesc push() { return {LayerKind::Push, 0, 0, 0}; }
LayerDesc concat() { return {LayerKind::Concat, 0, 0, 0}; }

std::string_view layer_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Push: return "push";
    case LayerKind::Concat: return "concat";
    }
    return "unknown";
}

namespace {

std::size_t layer_parameter_count(const LayerDesc& l) {
    switch (l.kind) {
    case LayerKind::Dense:
        return static_cast<std::size_t>(l.fan_in) * l.fan_out + l.fan_out;
    case LayerKind::Conv:
        return static_cast<std::size_t>(l.fan_in) * l.fan_out * l.kernel * l.kernel + l.fan_out;
    default:
        return 0;
    }
}

std::string head_name(HeadKind head) {
    return head == HeadKind::SigmoidProbability ? "sigmoid-probability" : "raw-evidence";
}

std::string layer_label(std::size_t index, const LayerDesc& l) {
    return "layer " + std::to_string(index) + " (" + std::string(layer_name(l.kind)) + ")";
}

} // namespace

bool NetworkSpec::spatial() const {
    return !layers.empty() && layers.front().kind != LayerKind::Dense;
}

int NetworkSpec::input_width() const {
    if (layers.empty()) throw StructuralError("network has no layers");
    return layers.front().fan_in;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw StructuralError("network has no layers");
    const auto& first = layers.front();
    if (first.kind != LayerKind::Dense && first.kind != LayerKind::Conv) {
        throw StructuralError("first layer must be dense or conv");
    }
    const bool is_spatial = first.kind == LayerKind::Conv;
    int width = first.fan_in;
    int level = 0;
    std::vector<std::pair<int, int>> skips; // (width, level)
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        switch (l.kind) {
        case LayerKind::Dense:
        case LayerKind::Conv:
            if ((l.kind == LayerKind::Conv) != is_spatial) {
                throw StructuralError(layer_label(i, l) + " mixes dense and spatial layers");
            }
            if (l.fan_in <= 0 || l.fan_out <= 0) {
                throw StructuralError(layer_label(i, l) + " has a non-positive fan");
            }
            if (l.fan_in != width) {
                throw StructuralError(layer_label(i, l) + " expects fan-in " + std::to_string(l.fan_in) +
                                      " but receives " + std::to_string(width));
            }
            if (l.kind == LayerKind::Conv && (l.kernel <= 0 || l.kernel % 2 == 0)) {
                throw StructuralError(layer_label(i, l) + " needs a positive odd kernel extent");
            }
            width = l.fan_out;
            break;
        case LayerKind::Relu:
        case LayerKind::Sigmoid:
            break;
        case LayerKind::MaxPool:
        case LayerKind::Upsample:
        case LayerKind::Push:
        case LayerKind::Concat:
            if (!is_spatial) throw StructuralError(layer_label(i, l) + " requires a spatial network");
            if (l.kind == LayerKind::MaxPool) ++level;
            if (l.kind == LayerKind::Upsample) {
                if (level == 0) throw StructuralError(layer_label(i, l) + " upsamples beyond input resolution");
                --level;
            }
            if (l.kind == LayerKind::Push) skips.emplace_back(width, level);
            if (l.kind == LayerKind::Concat) {
                if (skips.empty()) throw StructuralError(layer_label(i, l) + " has no saved skip activation");
                if (skips.back().second != level) {
                    throw StructuralError(layer_label(i, l) + " joins activations of different resolution");
                }
                width += skips.back().first;
                skips.pop_back();
            }
            break;
        }
    }
    if (!skips.empty()) throw StructuralError("skip stack not empty at network output");
    const auto last = layers.back().kind;
    if (head == HeadKind::SigmoidProbability && last != LayerKind::Sigmoid) {
        throw StructuralError("sigmoid-probability head requires a final sigmoid layer");
    }
    if (head == HeadKind::RawEvidence && last != LayerKind::Dense && last != LayerKind::Conv) {
        throw StructuralError("raw-evidence head requires a final linear layer");
    }
}

int NetworkSpec::output_width() const {
    int width = input_width();
    std::vector<int> skips;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv) width = l.fan_out;
        if (l.kind == LayerKind::Push) skips.push_back(width);
        if (l.kind == LayerKind::Concat && !skips.empty()) {
            width += skips.back();
            skips.pop_back();
        }
    }
    return width;
}

std::size_t NetworkSpec::parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += layer_parameter_count(l);
    return total;
}

std::vector<std::size_t> NetworkSpec::parameter_offsets() const {
    std::vector<std::size_t> offsets;
    std::size_t at = 0;
    for (const auto& l : layers) {
        offsets.push_back(at);
        at += layer_parameter_count(l);
    }
    return offsets;
}

std::string NetworkSpec::describe() const {
    std::ostringstream out;
    out << "head " << head_name(head) << "\n";
    for (const auto& l : layers) {
        out << layer_name(l.kind);
        if (l.kind == LayerKind::Dense) out << ' ' << l.fan_in << ' ' << l.fan_out;
        if (l.kind == LayerKind::Conv) out << ' ' << l.fan_in << ' ' << l.fan_out << ' ' << l.kernel;
        out << "\n";
    }
    out << "end\n";
    return out.str();
}

NetworkSpec NetworkSpec::parse(std::string_view text) {
    NetworkSpec spec;
    std::istringstream in{std::string(text)};
    std::string line;
    bool saw_head = false;
    bool saw_end = false;
    while (std::getline(in, line)) {
        std::istringstream words(line);
        std::string word;
        if (!(words >> word)) continue;
        if (word == "end") {
            saw_end = true;
            break;
        }
        if (word == "head") {
            std::string kind;
            words >> kind;
            if (kind == "sigmoid-probability") spec.head = HeadKind::SigmoidProbability;
            else if (kind == "raw-evidence") spec.head = HeadKind::RawEvidence;
            else throw FormatError("unknown head kind '" + kind + "'");
            saw_head = true;
            continue;
        }
        LayerDesc l;
        if (word == "dense") {
            l.kind = LayerKind::Dense;
            words >> l.fan_in >> l.fan_out;
        } else if (word == "conv") {
            l.kind = LayerKind::Conv;
            words >> l.fan_in >> l.fan_out >> l.kernel;
        } else if (word == "relu") {
            l.kind = LayerKind::Relu;
        } else if (word == "sigmoid") {
            l.kind = LayerKind::Sigmoid;
        } else if (word == "maxpool") {
            l.kind = LayerKind::MaxPool;
        } else if (word == "upsample") {
            l.kind = LayerKind::Upsample;
        } else if (word == "push") {
            l.kind = LayerKind::Push;
        } else if (word == "concat") {
            l.kind = LayerKind::Concat;
        } else {
            throw FormatError("unknown layer kind '" + word + "'");
        }
        if (words.fail()) throw FormatError("malformed layer line '" + line + "'");
        spec.layers.push_back(l);
    }
    if (!saw_head || !saw_end) throw FormatError("network descriptor lacks head or end line");
    spec.validate();
    return spec;
}

ModelState ModelState::zeros(const NetworkSpec& spec) {
    const std::size_t n = spec.parameter_count();
    ModelState state;
    state.parameters.assign(n, 0.0f);
    state.first_moment.assign(n, 0.0f);
    state.second_moment.assign(n, 0.0f);
    return state;
}

ModelState ModelState::initialize(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelState state = zeros(spec);
    Rng rng(seed);
    const auto offsets = spec.parameter_offsets();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (l.kind != LayerKind::Dense && l.kind != LayerKind::Conv) continue;
        const double receptive = l.kind == LayerKind::Conv ? static_cast<double>(l.kernel) * l.kernel : 1.0;
        const double limit = std::sqrt(6.0 / (receptive * (l.fan_in + l.fan_out)));
        const std::size_t weights = static_cast<std::size_t>(l.fan_in) * l.fan_out * static_cast<std::size_t>(receptive);
        for (std::size_t w = 0; w < weights; ++w) {
            state.parameters[offsets[i] + w] = static_cast<float>(rng.uniform(-limit, limit));
        }
    }
    return state;
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

/// Unfolds `channels` planes of h*w into rows of k*k shifted copies with zero padding.
template <typename T>
void im2col(const T* in, int channels, int h, int w, int k, T* col) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        const T* plane = in + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    T* dst = row + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst, dst + w, T{0});
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(sy) * w + dx;
                    std::fill(dst, dst + x0, T{0});
                    std::copy(src + x0, src + x1, dst + x0);
                    std::fill(dst + x1, dst + w, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, T* out) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < channels; ++c) {
        T* plane = out + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(y) * w;
                    T* dst = plane + static_cast<std::size_t>(sy) * w + dx;
                    for (int x = x0; x < x1; ++x) dst[x] += src[x];
                }
            }
        }
    }
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
class Graph {
public:
    Graph(const NetworkSpec& spec, std::span<const T> params)
        : spec_(spec), params_(params), offsets_(spec.parameter_offsets()) {
        if (params.size() != spec.parameter_count()) {
            throw StructuralError("parameter vector has length " + std::to_string(params.size()) + ", network needs " +
                                  std::to_string(spec.parameter_count()));
        }
    }

    const Tensor<T>& run(const Tensor<T>& input) {
        check_input(input);
        const std::size_t n_layers = spec_.layers.size();
        acts_.assign(n_layers + 1, Tensor<T>{});
        pool_index_.assign(n_layers, {});
        concat_source_.assign(n_layers, 0);
        acts_[0] = input;
        std::vector<std::size_t> skips;
        for (std::size_t i = 0; i < n_layers; ++i) {
            const auto& l = spec_.layers[i];
            const Tensor<T>& in = acts_[i];
            Tensor<T>& out = acts_[i + 1];
            switch (l.kind) {
            case LayerKind::Dense: dense_forward(i, in, out); break;
            case LayerKind::Conv: conv_forward(i, in, out); break;
            case LayerKind::Relu:
                out = in;
                for (auto& x : out.data) x = x < T{0} ? T{0} : x; // NaN passes through
                break;
            case LayerKind::Sigmoid:
                out = in;
                for (auto& x : out.data) x = T{1} / (T{1} + std::exp(-x));
                break;
            case LayerKind::MaxPool: pool_forward(i, in, out); break;
            case LayerKind::Upsample: upsample_forward(in, out); break;
            case LayerKind::Push:
                out = in;
                skips.push_back(i + 1);
                break;
            case LayerKind::Concat:
                concat_source_[i] = skips.back();
                skips.pop_back();
                concat_forward(in, acts_[concat_source_[i]], out);
                break;
            }
        }
        return acts_.back();
    }

    /// Name of the first layer whose output holds a non-finite value, or of
    /// the output layer if every activation is finite.
    std::string first_nonfinite_layer() const {
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            if (!all_finite(acts_[i + 1].data)) return layer_label(i, spec_.layers[i]);
        }
        const auto last = spec_.layers.size() - 1;
        return layer_label(last, spec_.layers[last]) + " (output)";
    }

    std::vector<T> backprop(Tensor<T> grad_output, bool skip_final_sigmoid = false) {
        if (grad_output.shape != acts_.back().shape) {
            throw StructuralError("loss gradient shape " + shape_string(grad_output.shape) +
                                  " does not match network output " + shape_string(acts_.back().shape));
        }
        std::vector<T> grad(params_.size(), T{0});
        std::vector<Tensor<T>> grads(acts_.size());
        std::size_t top = spec_.layers.size();
        if (skip_final_sigmoid) {
            if (spec_.layers.back().kind != LayerKind::Sigmoid) {
                throw StructuralError("logit gradients need a final sigmoid layer");
            }
            --top;
        }
        grads[top] = std::move(grad_output);
        for (std::size_t i = top; i-- > 0;) {
            const auto& l = spec_.layers[i];
            Tensor<T>& g_out = grads[i + 1];
            if (g_out.data.empty()) continue;
            Tensor<T> g_in(acts_[i].shape);
            switch (l.kind) {
            case LayerKind::Dense: dense_backward(i, g_out, g_in, grad); break;
            case LayerKind::Conv: conv_backward(i, g_out, g_in, grad); break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < g_in.size(); ++j) {
                    g_in.data[j] = acts_[i].data[j] > T{0} ? g_out.data[j] : T{0};
                }
                break;
            case LayerKind::Sigmoid:
                for (std::size_t j = 0; j < g_in.size(); ++j) {
                    const T s = acts_[i + 1].data[j];
                    g_in.data[j] = g_out.data[j] * s * (T{1} - s);
                }
                break;
            case LayerKind::MaxPool:
                for (std::size_t j = 0; j < g_out.size(); ++j) g_in.data[pool_index_[i][j]] += g_out.data[j];
                break;
            case LayerKind::Upsample: upsample_backward(g_out, g_in); break;
            case LayerKind::Push: g_in.data = g_out.data; break;
            case LayerKind::Concat: concat_backward(i, g_out, g_in, grads); break;
            }
            accumulate(grads[i], std::move(g_in));
            if (i > 0) g_out = Tensor<T>{};
        }
        return grad;
    }

    const Tensor<T>& output() const { return acts_.back(); }
    /// Input of layer i (activation 0 is the batch).
    const Tensor<T>& activation(std::size_t i) const { return acts_[i]; }

private:
    static void accumulate(Tensor<T>& into, Tensor<T>&& add) {
        if (into.data.empty()) {
            into = std::move(add);
            return;
        }
        for (std::size_t j = 0; j < into.size(); ++j) into.data[j] += add.data[j];
    }

    void check_input(const Tensor<T>& input) const {
        const auto& first = spec_.layers.front();
        const std::size_t rank = spec_.spatial() ? 4 : 2;
        if (input.rank() != rank || input.shape[1] != static_cast<std::size_t>(first.fan_in) || input.shape[0] == 0) {
            throw StructuralError("batch shape " + shape_string(input.shape) + " does not match network input (rank " +
                                  std::to_string(rank) + ", width " + std::to_string(first.fan_in) + ")");
        }
        if (input.size() != Tensor<T>::element_count(input.shape)) {
            throw StructuralError("batch data length does not match its shape");
        }
    }

    void dense_forward(std::size_t i, const Tensor<T>& in, Tensor<T>& out) const {
        const auto& l = spec_.layers[i];
        const std::size_t n = in.shape[0];
        out = Tensor<T>({n, static_cast<std::size_t>(l.fan_out)});
        const T* w = params_.data() + offsets_[i];
        const T* b = w + static_cast<std::size_t>(l.fan_in) * l.fan_out;
        ConstMap<T> x(in.data.data(), n, l.fan_in);
        ConstMap<T> wm(w, l.fan_out, l.fan_in);
        MutMap<T> y(out.data.data(), n, l.fan_out);
        y.noalias() = x * wm.transpose();
        for (std::size_t r = 0; r < n; ++r) {
            for (int c = 0; c < l.fan_out; ++c) y(r, c) += b[c];
        }
    }

    void dense_backward(std::size_t i, const Tensor<T>& g_out, Tensor<T>& g_in, std::vector<T>& grad) const {
        const auto& l = spec_.layers[i];
        const std::size_t n = g_out.shape[0];
        const T* w = params_.data() + offsets_[i];
        ConstMap<T> dy(g_out.data.data(), n, l.fan_out);
        ConstMap<T> x(acts_[i].data.data(), n, l.fan_in);
        ConstMap<T> wm(w, l.fan_out, l.fan_in);
        MutMap<T> dw(grad.data() + offsets_[i], l.fan_out, l.fan_in);
        dw.noalias() += dy.transpose() * x;
        T* db = grad.data() + offsets_[i] + static_cast<std::size_t>(l.fan_in) * l.fan_out;
        for (int c = 0; c < l.fan_out; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += dy(r, c);
            db[c] += static_cast<T>(s);
        }
        MutMap<T> dx(g_in.data.data(), n, l.fan_in);
        dx.noalias() = dy * wm;
    }

    void conv_forward(std::size_t i, const Tensor<T>& in, Tensor<T>& out) const {
        const auto& l = spec_.layers[i];
        const std::size_t n = in.shape[0];
        const int h = static_cast<int>(in.shape[2]);
        const int w = static_cast<int>(in.shape[3]);
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        const std::size_t k2 = static_cast<std::size_t>(l.kernel) * l.kernel;
        const std::size_t rows = static_cast<std::size_t>(l.fan_in) * k2;
        out = Tensor<T>({n, static_cast<std::size_t>(l.fan_out), in.shape[2], in.shape[3]});
        const T* wp = params_.data() + offsets_[i];
        const T* b = wp + rows * l.fan_out;
        parallel_for(n, [&](std::size_t s) {
            const T* x = in.data.data() + s * l.fan_in * hw;
            std::vector<T> col;
            if (l.kernel > 1) {
                col.resize(rows * hw);
                im2col(x, l.fan_in, h, w, l.kernel, col.data());
                x = col.data();
            }
            ConstMap<T> wm(wp, l.fan_out, rows);
            ConstMap<T> cm(x, rows, hw);
            MutMap<T> y(out.data.data() + s * l.fan_out * hw, l.fan_out, hw);
            y.noalias() = wm * cm;
            for (int c = 0; c < l.fan_out; ++c) y.row(c).array() += b[c];
        });
    }

    void conv_backward(std::size_t i, const Tensor<T>& g_out, Tensor<T>& g_in, std::vector<T>& grad) const {
        const auto& l = spec_.layers[i];
        const Tensor<T>& in = acts_[i];
        const std::size_t n = in.shape[0];
        const int h = static_cast<int>(in.shape[2]);
        const int w = static_cast<int>(in.shape[3]);
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        const std::size_t k2 = static_cast<std::size_t>(l.kernel) * l.kernel;
        const std::size_t rows = static_cast<std::size_t>(l.fan_in) * k2;
        const T* wp = params_.data() + offsets_[i];
        std::vector<std::vector<T>> per_sample(n);
        parallel_for(n, [&](std::size_t s) {
            const T* x = in.data.data() + s * l.fan_in * hw;
            std::vector<T> col;
            if (l.kernel > 1) {
                col.resize(rows * hw);
                im2col(x, l.fan_in, h, w, l.kernel, col.data());
                x = col.data();
            }
            ConstMap<T> dy(g_out.data.data() + s * l.fan_out * hw, l.fan_out, hw);
            ConstMap<T> cm(x, rows, hw);
            ConstMap<T> wm(wp, l.fan_out, rows);
            per_sample[s].assign(rows * l.fan_out, T{0});
            MutMap<T> dw(per_sample[s].data(), l.fan_out, rows);
            dw.noalias() = dy * cm.transpose();
            T* dx = g_in.data.data() + s * l.fan_in * hw;
            if (l.kernel > 1) {
                std::vector<T> dcol(rows * hw);
                MutMap<T> dc(dcol.data(), rows, hw);
                dc.noalias() = wm.transpose() * dy;
                col2im_add(dcol.data(), l.fan_in, h, w, l.kernel, dx);
            } else {
                MutMap<T> dxm(dx, rows, hw);
                dxm.noalias() = wm.transpose() * dy;
            }
        });
        T* gw = grad.data() + offsets_[i];
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t j = 0; j < per_sample[s].size(); ++j) gw[j] += per_sample[s][j];
        }
        T* gb = gw + rows * l.fan_out;
        for (int c = 0; c < l.fan_out; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const T* dy = g_out.data.data() + (s * l.fan_out + c) * hw;
                for (std::size_t j = 0; j < hw; ++j) acc += dy[j];
            }
            gb[c] += static_cast<T>(acc);
        }
    }

    void pool_forward(std::size_t i, const Tensor<T>& in, Tensor<T>& out) {
        const std::size_t n = in.shape[0], c = in.shape[1], h = in.shape[2], w = in.shape[3];
        if (h % 2 || w % 2) {
            throw StructuralError(layer_label(i, spec_.layers[i]) + " needs even spatial extents, got " +
                                  shape_string(in.shape));
        }
        const std::size_t oh = h / 2, ow = w / 2;
        out = Tensor<T>({n, c, oh, ow});
        auto& index = pool_index_[i];
        index.resize(out.size());
        for (std::size_t p = 0; p < n * c; ++p) {
            const std::size_t base = p * h * w;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    std::size_t best = base + (2 * y) * w + 2 * x;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t j = base + (2 * y + dy) * w + 2 * x + dx;
                            if (in.data[j] > in.data[best]) best = j;
                        }
                    }
                    const std::size_t o = (p * oh + y) * ow + x;
                    out.data[o] = in.data[best];
                    index[o] = best;
                }
            }
        }
    }

    static void upsample_forward(const Tensor<T>& in, Tensor<T>& out) {
        const std::size_t n = in.shape[0], c = in.shape[1], h = in.shape[2], w = in.shape[3];
        out = Tensor<T>({n, c, 2 * h, 2 * w});
        for (std::size_t p = 0; p < n * c; ++p) {
            for (std::size_t y = 0; y < 2 * h; ++y) {
                for (std::size_t x = 0; x < 2 * w; ++x) {
                    out.data[(p * 2 * h + y) * 2 * w + x] = in.data[(p * h + y / 2) * w + x / 2];
                }
            }
        }
    }

    static void upsample_backward(const Tensor<T>& g_out, Tensor<T>& g_in) {
        const std::size_t n = g_in.shape[0], c = g_in.shape[1], h = g_in.shape[2], w = g_in.shape[3];
        for (std::size_t p = 0; p < n * c; ++p) {
            for (std::size_t y = 0; y < 2 * h; ++y) {
                for (std::size_t x = 0; x < 2 * w; ++x) {
                    g_in.data[(p * h + y / 2) * w + x / 2] += g_out.data[(p * 2 * h + y) * 2 * w + x];
                }
            }
        }
    }

    static void concat_forward(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
        if (a.shape[0] != b.shape[0] || a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3]) {
            throw StructuralError("concat of " + shape_string(a.shape) + " and " + shape_string(b.shape));
        }
        const std::size_t n = a.shape[0];
        const std::size_t plane = a.shape[2] * a.shape[3];
        const std::size_t ca = a.shape[1] * plane, cb = b.shape[1] * plane;
        out = Tensor<T>({n, a.shape[1] + b.shape[1], a.shape[2], a.shape[3]});
        for (std::size_t s = 0; s < n; ++s) {
            std::copy_n(a.data.data() + s * ca, ca, out.data.data() + s * (ca + cb));
            std::copy_n(b.data.data() + s * cb, cb, out.data.data() + s * (ca + cb) + ca);
        }
    }

    void concat_backward(std::size_t i, const Tensor<T>& g_out, Tensor<T>& g_in,
                         std::vector<Tensor<T>>& grads) const {
        const std::size_t src = concat_source_[i];
        const Tensor<T>& b = acts_[src];
        const std::size_t n = g_in.shape[0];
        const std::size_t plane = g_in.shape[2] * g_in.shape[3];
        const std::size_t ca = g_in.shape[1] * plane, cb = b.shape[1] * plane;
        Tensor<T> g_skip(b.shape);
        for (std::size_t s = 0; s < n; ++s) {
            std::copy_n(g_out.data.data() + s * (ca + cb), ca, g_in.data.data() + s * ca);
            std::copy_n(g_out.data.data() + s * (ca + cb) + ca, cb, g_skip.data.data() + s * cb);
        }
        accumulate(grads[src], std::move(g_skip));
    }

    const NetworkSpec& spec_;
    std::span<const T> params_;
    std::vector<std::size_t> offsets_;
    std::vector<Tensor<T>> acts_;
    std::vector<std::vector<std::size_t>> pool_index_;
    std::vector<std::size_t> concat_source_;
};

} // namespace

template <typename T>
Tensor<T> forward(const NetworkSpec& spec, std::span<const T> parameters, const Tensor<T>& batch) {
    spec.validate();
    Graph<T> graph(spec, parameters);
    graph.run(batch);
    if (!all_finite(graph.output().data)) {
        throw NumericError("non-finite network output, first at " + graph.first_nonfinite_layer());
    }
    return graph.output();
}

template <typename T>
Evaluation<T> evaluate_with_gradients(const NetworkSpec& spec, std::span<const T> parameters,
                                      const Tensor<T>& batch, const LossClosure<T>& loss) {
    spec.validate();
    Graph<T> graph(spec, parameters);
    const Tensor<T>& out = graph.run(batch);
    Tensor<T> grad_output(out.shape);
    Evaluation<T> result;
    result.loss = loss(out, grad_output);
    if (!std::isfinite(result.loss)) {
        throw NumericError("non-finite loss; first non-finite activation at " + graph.first_nonfinite_layer());
    }
    result.gradient = graph.backprop(std::move(grad_output));
    return result;
}

template <typename T>
Evaluation<T> evaluate_with_logit_gradients(const NetworkSpec& spec, std::span<const T> parameters,
                                            const Tensor<T>& batch, const LossClosure<T>& loss) {
    spec.validate();
    Graph<T> graph(spec, parameters);
    const Tensor<T>& out = graph.run(batch);
    Tensor<T> grad_logit(out.shape);
    Evaluation<T> result;
    result.loss = loss(out, grad_logit);
    if (!std::isfinite(result.loss)) {
        throw NumericError("non-finite loss; first non-finite activation at " + graph.first_nonfinite_layer());
    }
    result.gradient = graph.backprop(std::move(grad_logit), true);
    return result;
}

template <typename T>
double kink_margin(const NetworkSpec& spec, std::span<const T> parameters, const Tensor<T>& batch) {
    spec.validate();
    Graph<T> graph(spec, parameters);
    graph.run(batch);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Tensor<T>& in = graph.activation(i);
        if (spec.layers[i].kind == LayerKind::Relu) {
            for (T x : in.data) margin = std::min(margin, std::fabs(static_cast<double>(x)));
        } else if (spec.layers[i].kind == LayerKind::MaxPool) {
            const std::size_t h = in.shape[2], w = in.shape[3];
            for (std::size_t p = 0; p < in.shape[0] * in.shape[1]; ++p) {
                for (std::size_t y = 0; y < h; y += 2) {
                    for (std::size_t x = 0; x < w; x += 2) {
                        std::array<double, 4> v{};
                        for (std::size_t k = 0; k < 4; ++k) {
                            v[k] = static_cast<double>(in.data[p * h * w + (y + k / 2) * w + x + k % 2]);
                        }
                        std::sort(v.begin(), v.end());
                        // Windows of dead units are covered by the ReLU margin.
                        if (v[3] == 0.0 && v[2] == 0.0) continue;
                        margin = std::min(margin, v[3] - v[2]);
                    }
                }
            }
        }
    }
    return margin;
}

template double kink_margin<float>(const NetworkSpec&, std::span<const float>, const Tensor<float>&);
template double kink_margin<double>(const NetworkSpec&, std::span<const double>, const Tensor<double>&);

template Tensor<float> forward<float>(const NetworkSpec&, std::span<const float>, const Tensor<float>&);
template Tensor<double> forward<double>(const NetworkSpec&, std::span<const double>, const Tensor<double>&);
template Evaluation<float> evaluate_with_gradients<float>(const NetworkSpec&, std::span<const float>,
                                                          const Tensor<float>&, const LossClosure<float>&);
template Evaluation<double> evaluate_with_gradients<double>(const NetworkSpec&, std::span<const double>,
                                                            const Tensor<double>&, const LossClosure<double>&);
template Evaluation<float> evaluate_with_logit_gradients<float>(const NetworkSpec&, std::span<const float>,
                                                                const Tensor<float>&, const LossClosure<float>&);
template Evaluation<double> evaluate_with_logit_gradients<double>(const NetworkSpec&, std::span<const double>,
                                                                  const Tensor<double>&, const LossClosure<double>&);

} // namespace emseg::nn

#include "mxz/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace mxz {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::C: return "C";
    case Architecture::R1: return "R1";
    case Architecture::R2: return "R2";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "C" || name == "c") return Architecture::C;
  if (name == "R1" || name == "r1") return Architecture::R1;
  if (name == "R2" || name == "r2") return Architecture::R2;
  throw UsageError("unknown architecture '" + std::string(name) + "' (expected C|R1|R2)");
}

NetworkSpec NetworkSpec::desk(Architecture arch, const GameConfig& game, const EncodingConfig& enc, double bound,
                              bool with_policy) {
  NetworkSpec s;
  s.arch = arch;
  s.filters = arch == Architecture::C ? 24 : 16;
  s.dense = arch == Architecture::C ? 64 : 32;
  s.planes = enc.planes();
  s.height = game.rows;
  s.width = game.cols;
  s.bound = bound;
  s.policy_size = with_policy ? game.action_space() : 0;
  return s;
}

int NetworkSpec::resolved_conv_layers() const {
  if (arch != Architecture::C) return 0;
  if (conv_layers > 0) return conv_layers;
  return std::clamp((std::min(height, width) - 1) / 2, 1, 3);
}

void NetworkSpec::validate() const {
  if (filters < 1 || dense < 1) throw UsageError("network needs F >= 1 and D >= 1");
  if (planes < 1 || height < 1 || width < 1) throw UsageError("network input shape must be positive");
  if (!(bound > 0.0) || !std::isfinite(bound)) throw UsageError("network output bound L must be positive");
  if (policy_size < 0) throw UsageError("policy size must be >= 0");
  if (arch == Architecture::C) {
    const int k = resolved_conv_layers();
    if (height - 2 * k < 1 || width - 2 * k < 1)
      throw UsageError("C-net with " + std::to_string(k) + " valid convolutions does not fit a " +
                       std::to_string(height) + "x" + std::to_string(width) + " input");
  }
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << to_string(arch) << "(F=" << filters << ",D=" << dense << ",in=" << planes << "x" << height << "x" << width
     << ",L=" << bound;
  if (arch == Architecture::C) os << ",convs=" << resolved_conv_layers();
  if (policy_size > 0) os << ",policy=" << policy_size;
  os << ")";
  return os.str();
}

// Program ----------------------------------------------------------------------------

struct Op {
  enum class Kind : std::uint8_t { conv, relu, res_save, res_add, flatten, dense };
  Kind kind = Kind::relu;
  // conv
  int cin = 0, cout = 0, k = 0, pad = 0, in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  // dense
  int in = 0, out = 0;
  std::size_t w = 0, b = 0;
  // activation geometry: rows x (n * spatial)
  int rows_in = 0, sp_in = 0, rows_out = 0, sp_out = 0;
};

template <class T>
struct Pass {
  std::vector<std::vector<T>> acts;  // input of each op
  std::vector<std::vector<T>> cols;  // im2col buffers of conv ops
  std::vector<T> hidden;             // trunk output, D x n
};

class NetProgram {
 public:
  explicit NetProgram(const NetworkSpec& spec) : spec_(spec) {
    spec.validate();
    int c = spec.planes;
    int h = spec.height;
    int w = spec.width;
    const int f = spec.filters;
    auto conv = [&](int cout, int k, int pad) {
      Op op;
      op.kind = Op::Kind::conv;
      op.cin = c;
      op.cout = cout;
      op.k = k;
      op.pad = pad;
      op.in_h = h;
      op.in_w = w;
      op.out_h = h + 2 * pad - k + 1;
      op.out_w = w + 2 * pad - k + 1;
      op.w = alloc(static_cast<std::size_t>(cout) * static_cast<std::size_t>(c * k * k), c * k * k);
      op.b = alloc(static_cast<std::size_t>(cout), 0);
      op.rows_in = c;
      op.sp_in = h * w;
      op.rows_out = cout;
      op.sp_out = op.out_h * op.out_w;
      ops_.push_back(op);
      c = cout;
      h = op.out_h;
      w = op.out_w;
    };
    auto pointwise = [&](Op::Kind kind) {
      Op op;
      op.kind = kind;
      op.rows_in = op.rows_out = c;
      op.sp_in = op.sp_out = h * w;
      ops_.push_back(op);
    };
    auto flatten = [&]() {
      Op op;
      op.kind = Op::Kind::flatten;
      op.cin = c;
      op.in_h = h;
      op.in_w = w;
      op.rows_in = c;
      op.sp_in = h * w;
      op.rows_out = c * h * w;
      op.sp_out = 1;
      ops_.push_back(op);
      c = c * h * w;
      h = w = 1;
    };
    auto dense = [&](int out) {
      Op op;
      op.kind = Op::Kind::dense;
      op.in = c;
      op.out = out;
      op.w = alloc(static_cast<std::size_t>(out) * static_cast<std::size_t>(c), c);
      op.b = alloc(static_cast<std::size_t>(out), 0);
      op.rows_in = c;
      op.sp_in = 1;
      op.rows_out = out;
      op.sp_out = 1;
      ops_.push_back(op);
      c = out;
    };
    const int blocks = spec.arch == Architecture::R2 ? 8 : 2;
    auto residual_block = [&]() {
      pointwise(Op::Kind::res_save);
      pointwise(Op::Kind::relu);
      conv(f, 3, 1);
      pointwise(Op::Kind::relu);
      conv(f, 3, 1);
      // Damped branch init keeps the stacked residual sum in range.
      blocks_[blocks_.size() - 2].gain = 1.0 / std::sqrt(static_cast<double>(blocks));
      pointwise(Op::Kind::relu);
      pointwise(Op::Kind::res_add);
    };
    switch (spec.arch) {
      case Architecture::C:
        for (int i = 0; i < spec.resolved_conv_layers(); ++i) {
          conv(f, 3, 0);
          pointwise(Op::Kind::relu);
        }
        flatten();
        dense(spec.dense);
        pointwise(Op::Kind::relu);
        break;
      case Architecture::R1:
        conv(f, 3, 1);
        residual_block();
        residual_block();
        conv(1, 1, 0);
        flatten();
        dense(spec.dense);
        pointwise(Op::Kind::relu);
        break;
      case Architecture::R2:
        conv(f, 3, 1);
        for (int i = 0; i < 8; ++i) residual_block();
        flatten();
        dense(spec.dense);
        pointwise(Op::Kind::relu);
        dense(spec.dense);
        pointwise(Op::Kind::relu);
        break;
    }
    hidden_ = c;
    value_w_ = alloc(static_cast<std::size_t>(hidden_), hidden_);
    value_b_ = alloc(1, 0);
    if (spec.policy_size > 0) {
      policy_w_ = alloc(static_cast<std::size_t>(spec.policy_size) * static_cast<std::size_t>(hidden_), hidden_);
      policy_b_ = alloc(static_cast<std::size_t>(spec.policy_size), 0);
    }
  }

  std::size_t parameter_count() const { return count_; }

  /// Fan-in scaled uniform initialisation (He for hidden layers, LeCun for heads).
  std::vector<float> initial_parameters(std::uint64_t seed) const {
    std::vector<float> p(count_, 0.0f);
    std::mt19937_64 rng(seed);
    for (const Block& blk : blocks_) {
      if (blk.fan_in == 0) continue;
      const bool head = blk.offset >= value_w_;
      const double limit = blk.gain * std::sqrt((head ? 3.0 : 6.0) / blk.fan_in);
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t i = 0; i < blk.size; ++i) p[blk.offset + i] = static_cast<float>(u(rng));
    }
    return p;
  }

  std::size_t value_weights() const { return value_w_; }
  int hidden() const { return hidden_; }

  template <class T>
  void forward(const T* params, const float* inputs, int n, Pass<T>& pass, bool keep) const {
    const int in_sp = spec_.height * spec_.width;
    std::vector<T> x(static_cast<std::size_t>(spec_.planes) * static_cast<std::size_t>(n * in_sp));
    for (int s = 0; s < n; ++s)
      for (int p = 0; p < spec_.planes; ++p)
        for (int i = 0; i < in_sp; ++i)
          x[static_cast<std::size_t>((p * n + s) * in_sp + i)] =
              static_cast<T>(inputs[static_cast<std::size_t>((s * spec_.planes + p) * in_sp + i)]);
    if (keep) {
      pass.acts.assign(ops_.size(), {});
      pass.cols.assign(ops_.size(), {});
    }
    std::vector<T> saved;
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      const Op& op = ops_[i];
      std::vector<T> y;
      switch (op.kind) {
        case Op::Kind::conv: {
          std::vector<T> cols = im2col(op, x, n);
          y.resize(static_cast<std::size_t>(op.cout) * static_cast<std::size_t>(n * op.sp_out));
          affine(params + op.w, params + op.b, op.cout, op.cin * op.k * op.k, cols.data(), n * op.sp_out, y.data());
          if (keep) pass.cols[i] = std::move(cols);
          break;
        }
        case Op::Kind::dense:
          y.resize(static_cast<std::size_t>(op.out) * static_cast<std::size_t>(n));
          affine(params + op.w, params + op.b, op.out, op.in, x.data(), n, y.data());
          break;
        case Op::Kind::relu:
          y = x;
          for (T& v : y) v = v > T(0) ? v : T(0);
          break;
        case Op::Kind::res_save:
          saved = x;
          y = x;
          break;
        case Op::Kind::res_add:
          y = x;
          for (std::size_t j = 0; j < y.size(); ++j) y[j] += saved[j];
          break;
        case Op::Kind::flatten: {
          const int sp = op.sp_in;
          y.resize(x.size());
          for (int c = 0; c < op.rows_in; ++c)
            for (int s = 0; s < n; ++s)
              for (int p = 0; p < sp; ++p)
                y[static_cast<std::size_t>((c * sp + p) * n + s)] = x[static_cast<std::size_t>((c * n + s) * sp + p)];
          break;
        }
      }
      if (keep) pass.acts[i] = std::move(x);
      x = std::move(y);
    }
    pass.hidden = std::move(x);
  }

  template <class T>
  void heads(const T* params, const Pass<T>& pass, int n, T* z, T* logits) const {
    affine(params + value_w_, params + value_b_, 1, hidden_, pass.hidden.data(), n, z);
    if (logits != nullptr && spec_.policy_size > 0) {
      std::vector<T> l(static_cast<std::size_t>(spec_.policy_size) * static_cast<std::size_t>(n));
      affine(params + policy_w_, params + policy_b_, spec_.policy_size, hidden_, pass.hidden.data(), n, l.data());
      for (int s = 0; s < n; ++s)
        for (int a = 0; a < spec_.policy_size; ++a)
          logits[static_cast<std::size_t>(s * spec_.policy_size + a)] = l[static_cast<std::size_t>(a * n + s)];
    }
  }

  struct LossParts {
    double total = 0.0;
    double value = 0.0;
    double policy = 0.0;
  };

  /// Batch loss and (optionally) its gradient with respect to `params`.
  template <class T>
  LossParts loss(const T* params, std::span<const ReplaySample* const> batch, double policy_weight,
                 std::vector<T>* grad) const {
    const int n = static_cast<int>(batch.size());
    const int in_size = spec_.input_size();
    std::vector<float> inputs(static_cast<std::size_t>(n * in_size));
    for (int s = 0; s < n; ++s) {
      if (static_cast<int>(batch[static_cast<std::size_t>(s)]->input.size()) != in_size)
        throw UsageError("training sample has " + std::to_string(batch[static_cast<std::size_t>(s)]->input.size()) +
                         " inputs, network expects " + std::to_string(in_size));
      std::copy(batch[static_cast<std::size_t>(s)]->input.begin(), batch[static_cast<std::size_t>(s)]->input.end(),
                inputs.begin() + static_cast<std::ptrdiff_t>(s * in_size));
    }
    Pass<T> pass;
    forward(params, inputs.data(), n, pass, grad != nullptr);
    const bool use_policy = spec_.policy_size > 0 && policy_weight > 0.0 &&
                            std::any_of(batch.begin(), batch.end(), [](const ReplaySample* r) { return !r->policy.empty(); });
    std::vector<T> z(static_cast<std::size_t>(n));
    std::vector<T> logits(use_policy ? static_cast<std::size_t>(n * spec_.policy_size) : 0);
    heads(params, pass, n, z.data(), use_policy ? logits.data() : nullptr);

    LossParts out;
    const T bound = static_cast<T>(spec_.bound);
    std::vector<T> dz(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      const T t = std::tanh(z[static_cast<std::size_t>(s)]);
      const T e = t - static_cast<T>(batch[static_cast<std::size_t>(s)]->target) / bound;
      out.value += static_cast<double>(e * e);
      dz[static_cast<std::size_t>(s)] = T(2) * e * (T(1) - t * t) / static_cast<T>(n);
    }
    out.value /= n;
    std::vector<T> dlogits;
    if (use_policy) {
      const int p = spec_.policy_size;
      dlogits.assign(static_cast<std::size_t>(n * p), T(0));
      for (int s = 0; s < n; ++s) {
        const auto& target = batch[static_cast<std::size_t>(s)]->policy;
        if (target.empty()) continue;
        const T* l = logits.data() + static_cast<std::ptrdiff_t>(s * p);
        T mx = *std::max_element(l, l + p);
        T sum = 0;
        for (int a = 0; a < p; ++a) sum += std::exp(l[a] - mx);
        const T log_sum = std::log(sum) + mx;
        for (int a = 0; a < p; ++a) {
          const T prob = std::exp(l[a] - log_sum);
          const T pi = static_cast<T>(target[static_cast<std::size_t>(a)]);
          if (pi > T(0)) out.policy -= static_cast<double>(pi * (l[a] - log_sum));
          dlogits[static_cast<std::size_t>(s * p + a)] = static_cast<T>(policy_weight) * (prob - pi) / static_cast<T>(n);
        }
      }
      out.policy /= n;
    }
    out.total = out.value + policy_weight * out.policy;
    if (grad == nullptr) return out;

    grad->assign(count_, T(0));
    T* g = grad->data();
    // Heads.
    std::vector<T> dh(static_cast<std::size_t>(hidden_) * static_cast<std::size_t>(n), T(0));
    affine_backward(params + value_w_, 1, hidden_, pass.hidden.data(), n, dz.data(), g + value_w_, g + value_b_,
                    dh.data());
    if (use_policy) {
      const int p = spec_.policy_size;
      std::vector<T> dl(static_cast<std::size_t>(p * n));
      for (int s = 0; s < n; ++s)
        for (int a = 0; a < p; ++a)
          dl[static_cast<std::size_t>(a * n + s)] = dlogits[static_cast<std::size_t>(s * p + a)];
      affine_backward(params + policy_w_, p, hidden_, pass.hidden.data(), n, dl.data(), g + policy_w_,
                      g + policy_b_, dh.data());
    }
    // Trunk, in reverse.
    std::vector<T> dy = std::move(dh);
    std::vector<T> dsaved;
    for (std::size_t i = ops_.size(); i-- > 0;) {
      const Op& op = ops_[i];
      const std::vector<T>& x = pass.acts[i];
      std::vector<T> dx;
      switch (op.kind) {
        case Op::Kind::conv: {
          const int kk = op.cin * op.k * op.k;
          std::vector<T> dcols(static_cast<std::size_t>(kk) * static_cast<std::size_t>(n * op.sp_out), T(0));
          affine_backward(params + op.w, op.cout, kk, pass.cols[i].data(), n * op.sp_out, dy.data(), g + op.w,
                          g + op.b, dcols.data());
          dx = col2im(op, dcols, n);
          break;
        }
        case Op::Kind::dense:
          dx.assign(static_cast<std::size_t>(op.in) * static_cast<std::size_t>(n), T(0));
          affine_backward(params + op.w, op.out, op.in, x.data(), n, dy.data(), g + op.w, g + op.b, dx.data());
          break;
        case Op::Kind::relu:
          dx = std::move(dy);
          for (std::size_t j = 0; j < dx.size(); ++j)
            if (!(x[j] > T(0))) dx[j] = T(0);
          break;
        case Op::Kind::res_add:
          dsaved = dy;
          dx = std::move(dy);
          break;
        case Op::Kind::res_save:
          dx = std::move(dy);
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += dsaved[j];
          break;
        case Op::Kind::flatten: {
          const int sp = op.sp_in;
          dx.resize(dy.size());
          for (int c = 0; c < op.rows_in; ++c)
            for (int s = 0; s < n; ++s)
              for (int p = 0; p < sp; ++p)
                dx[static_cast<std::size_t>((c * n + s) * sp + p)] = dy[static_cast<std::size_t>((c * sp + p) * n + s)];
          break;
        }
      }
      dy = std::move(dx);
    }
    return out;
  }

 private:
  struct Block {
    std::size_t offset;
    std::size_t size;
    int fan_in;
    double gain = 1.0;
  };

  std::size_t alloc(std::size_t size, int fan_in) {
    const std::size_t off = count_;
    blocks_.push_back({off, size, fan_in});
    count_ += size;
    return off;
  }

  // y[m][j] = b[m] + sum_k w[m][k] * x[k][j], accumulated in k order for every j.
  template <class T>
  static void affine(const T* w, const T* b, int m_rows, int k_rows, const T* x, int cols, T* y) {
    for (int m = 0; m < m_rows; ++m) {
      T* out = y + static_cast<std::ptrdiff_t>(m) * cols;
      std::fill(out, out + cols, b[m]);
      const T* wm = w + static_cast<std::ptrdiff_t>(m) * k_rows;
      for (int k = 0; k < k_rows; ++k) {
        const T wk = wm[k];
        const T* xk = x + static_cast<std::ptrdiff_t>(k) * cols;
        for (int j = 0; j < cols; ++j) out[j] += wk * xk[j];
      }
    }
  }

  // Accumulates dw, db and dx for y = w x + b.
  template <class T>
  static void affine_backward(const T* w, int m_rows, int k_rows, const T* x, int cols, const T* dy, T* dw, T* db,
                              T* dx) {
    for (int m = 0; m < m_rows; ++m) {
      const T* g = dy + static_cast<std::ptrdiff_t>(m) * cols;
      T sum = 0;
      for (int j = 0; j < cols; ++j) sum += g[j];
      db[m] += sum;
      const T* wm = w + static_cast<std::ptrdiff_t>(m) * k_rows;
      T* dwm = dw + static_cast<std::ptrdiff_t>(m) * k_rows;
      for (int k = 0; k < k_rows; ++k) {
        const T* xk = x + static_cast<std::ptrdiff_t>(k) * cols;
        T acc = 0;
        for (int j = 0; j < cols; ++j) acc += g[j] * xk[j];
        dwm[k] += acc;
        T* dxk = dx + static_cast<std::ptrdiff_t>(k) * cols;
        const T wk = wm[k];
        for (int j = 0; j < cols; ++j) dxk[j] += wk * g[j];
      }
    }
  }

  template <class T>
  static std::vector<T> im2col(const Op& op, const std::vector<T>& x, int n) {
    const int kk = op.k * op.k;
    std::vector<T> cols(static_cast<std::size_t>(op.cin * kk) * static_cast<std::size_t>(n * op.sp_out), T(0));
    const int row_len = n * op.sp_out;
    for (int c = 0; c < op.cin; ++c)
      for (int ky = 0; ky < op.k; ++ky)
        for (int kx = 0; kx < op.k; ++kx) {
          T* row = cols.data() + static_cast<std::ptrdiff_t>((c * kk + ky * op.k + kx)) * row_len;
          for (int s = 0; s < n; ++s) {
            const T* src = x.data() + static_cast<std::ptrdiff_t>((c * n + s)) * op.sp_in;
            for (int oy = 0; oy < op.out_h; ++oy) {
              const int iy = oy + ky - op.pad;
              if (iy < 0 || iy >= op.in_h) continue;
              for (int ox = 0; ox < op.out_w; ++ox) {
                const int ix = ox + kx - op.pad;
                if (ix < 0 || ix >= op.in_w) continue;
                row[s * op.sp_out + oy * op.out_w + ox] = src[iy * op.in_w + ix];
              }
            }
          }
        }
    return cols;
  }

  template <class T>
  static std::vector<T> col2im(const Op& op, const std::vector<T>& dcols, int n) {
    const int kk = op.k * op.k;
    std::vector<T> dx(static_cast<std::size_t>(op.cin) * static_cast<std::size_t>(n * op.sp_in), T(0));
    const int row_len = n * op.sp_out;
    for (int c = 0; c < op.cin; ++c)
      for (int ky = 0; ky < op.k; ++ky)
        for (int kx = 0; kx < op.k; ++kx) {
          const T* row = dcols.data() + static_cast<std::ptrdiff_t>((c * kk + ky * op.k + kx)) * row_len;
          for (int s = 0; s < n; ++s) {
            T* dst = dx.data() + static_cast<std::ptrdiff_t>((c * n + s)) * op.sp_in;
            for (int oy = 0; oy < op.out_h; ++oy) {
              const int iy = oy + ky - op.pad;
              if (iy < 0 || iy >= op.in_h) continue;
              for (int ox = 0; ox < op.out_w; ++ox) {
                const int ix = ox + kx - op.pad;
                if (ix < 0 || ix >= op.in_w) continue;
                dst[iy * op.in_w + ix] += row[s * op.sp_out + oy * op.out_w + ox];
              }
            }
          }
        }
    return dx;
  }

  NetworkSpec spec_;
  std::vector<Op> ops_;
  std::vector<Block> blocks_;
  std::size_t count_ = 0;
  int hidden_ = 0;
  std::size_t value_w_ = 0, value_b_ = 0, policy_w_ = 0, policy_b_ = 0;
};

// ValueNetwork ------------------------------------------------------------------------

ValueNetwork::ValueNetwork(const NetworkSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed), program_(std::make_unique<NetProgram>(spec)) {
  params_ = program_->initial_parameters(seed);
  adam_m_.assign(params_.size(), 0.0f);
  adam_v_.assign(params_.size(), 0.0f);
}

ValueNetwork::ValueNetwork(const ValueNetwork& o)
    : spec_(o.spec_),
      seed_(o.seed_),
      step_(o.step_),
      params_(o.params_),
      adam_m_(o.adam_m_),
      adam_v_(o.adam_v_),
      program_(std::make_unique<NetProgram>(*o.program_)) {}

ValueNetwork& ValueNetwork::operator=(const ValueNetwork& o) {
  if (this != &o) {
    ValueNetwork tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

ValueNetwork::ValueNetwork(ValueNetwork&&) noexcept = default;
ValueNetwork& ValueNetwork::operator=(ValueNetwork&&) noexcept = default;
ValueNetwork::~ValueNetwork() = default;

void ValueNetwork::set_parameters(std::vector<float> params) {
  if (params.size() != params_.size())
    throw UsageError("parameter vector has " + std::to_string(params.size()) + " entries, network has " +
                     std::to_string(params_.size()));
  params_ = std::move(params);
  std::fill(adam_m_.begin(), adam_m_.end(), 0.0f);
  std::fill(adam_v_.begin(), adam_v_.end(), 0.0f);
}

void ValueNetwork::zero_value_head() {
  const std::size_t off = program_->value_weights();
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(off),
            params_.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(program_->hidden()) + 1), 0.0f);
}

void ValueNetwork::evaluate(const float* inputs, int n, float* values, float* policy_logits) const {
  if (n <= 0) return;
  Pass<float> pass;
  program_->forward(params_.data(), inputs, n, pass, false);
  std::vector<float> z(static_cast<std::size_t>(n));
  program_->heads(params_.data(), pass, n, z.data(), policy_logits);
  const auto bound = static_cast<float>(spec_.bound);
  for (int s = 0; s < n; ++s) {
    const float v = bound * std::tanh(z[static_cast<std::size_t>(s)]);
    values[s] = std::clamp(v, -bound, bound);
  }
}

std::vector<float> ValueNetwork::evaluate_batch(std::span<const FeatureTensor> xs) const {
  const int in = spec_.input_size();
  std::vector<float> flat;
  flat.reserve(xs.size() * static_cast<std::size_t>(in));
  for (const FeatureTensor& t : xs) {
    if (t.planes != spec_.planes || t.height != spec_.height || t.width != spec_.width)
      throw UsageError("tensor shape " + std::to_string(t.planes) + "x" + std::to_string(t.height) + "x" +
                       std::to_string(t.width) + " does not match network input " + std::to_string(spec_.planes) +
                       "x" + std::to_string(spec_.height) + "x" + std::to_string(spec_.width));
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  std::vector<float> out(xs.size());
  evaluate(flat.data(), static_cast<int>(xs.size()), out.data());
  return out;
}

TrainResult ValueNetwork::train_step(std::span<const ReplaySample> batch, const OptimizerConfig& opt) {
  std::vector<const ReplaySample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return train_step(std::span<const ReplaySample* const>(ptrs), opt);
}

TrainResult ValueNetwork::train_step(std::span<const ReplaySample* const> batch, const OptimizerConfig& opt) {
  if (batch.empty()) throw UsageError("train_step needs a non-empty batch");
  for (const ReplaySample* s : batch)
    if (!(std::abs(s->target) <= spec_.bound + 1e-6))
      throw UsageError("training target " + std::to_string(s->target) + " outside [-L, L]");
  std::vector<float> grad;
  const auto parts = program_->loss(params_.data(), batch, opt.policy_weight, &grad);
  TrainResult r{parts.total, parts.value, parts.policy, true, {}};
  double norm2 = 0.0;
  for (float g : grad) norm2 += static_cast<double>(g) * g;
  if (!std::isfinite(parts.total) || !std::isfinite(norm2)) {
    r.accepted = false;
    r.incident = "non-finite loss or gradient at step " + std::to_string(step_) + "; update skipped";
    return r;
  }
  const double norm = std::sqrt(norm2);
  const double scale = opt.clip_norm > 0.0 && norm > opt.clip_norm ? opt.clip_norm / norm : 1.0;
  ++step_;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const double g = grad[i] * scale;
    const double m = opt.beta1 * adam_m_[i] + (1.0 - opt.beta1) * g;
    const double v = opt.beta2 * adam_v_[i] + (1.0 - opt.beta2) * g * g;
    adam_m_[i] = static_cast<float>(m);
    adam_v_[i] = static_cast<float>(v);
    params_[i] -= static_cast<float>(opt.learning_rate * (m / c1) / (std::sqrt(v / c2) + opt.epsilon));
  }
  return r;
}

double ValueNetwork::loss_and_gradient(const std::vector<double>& params, std::span<const ReplaySample> batch,
                                       std::vector<double>* grad) const {
  if (params.size() != params_.size()) throw UsageError("parameter vector size mismatch");
  std::vector<const ReplaySample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return program_->loss(params.data(), std::span<const ReplaySample* const>(ptrs), 1.0, grad).total;
}

// Checkpoints ----------------------------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  float f32() {
    const std::uint32_t bits = u32();
    float v = 0;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v = 0;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

void ValueNetwork::restore_training_state(std::vector<float> params, std::vector<float> m, std::vector<float> v,
                                          std::uint64_t step) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw UsageError("optimizer state does not match the network size");
  set_parameters(std::move(params));
  adam_m_ = std::move(m);
  adam_v_ = std::move(v);
  step_ = step;
}

struct CheckpointAccess {
  static void restore(ValueNetwork& net, std::vector<float> params, std::uint64_t step) {
    net.set_parameters(std::move(params));
    net.step_ = step;
  }
};

std::vector<std::uint8_t> serialize_checkpoint(const ValueNetwork& net, const CheckpointMeta& meta) {
  Writer w;
  w.bytes("MXZ1", 4);
  w.u32(kCheckpointVersion);
  const NetworkSpec& s = net.spec();
  w.u8(static_cast<std::uint8_t>(s.arch));
  w.u32(static_cast<std::uint32_t>(s.filters));
  w.u32(static_cast<std::uint32_t>(s.dense));
  w.u32(static_cast<std::uint32_t>(s.planes));
  w.u32(static_cast<std::uint32_t>(s.height));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.f64(s.bound);
  w.u32(static_cast<std::uint32_t>(s.conv_layers));
  w.u32(static_cast<std::uint32_t>(s.policy_size));
  w.u8(static_cast<std::uint8_t>(meta.game.kind));
  w.u32(static_cast<std::uint32_t>(meta.game.rows));
  w.u32(static_cast<std::uint32_t>(meta.game.cols));
  w.u32(static_cast<std::uint32_t>(meta.game.ply_cap));
  w.u8(meta.encoding.sides ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(meta.heuristic.kind));
  w.u64(meta.step);
  w.u64(meta.games);
  w.u64(meta.seed);
  w.u32(static_cast<std::uint32_t>(meta.config_digest.size()));
  w.bytes(meta.config_digest.data(), meta.config_digest.size());
  const auto params = net.parameters();
  w.u64(params.size());
  for (float p : params) w.f32(p);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != "MXZ1") throw std::runtime_error("not a checkpoint (missing MXZ1 header)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  NetworkSpec s;
  const std::uint8_t arch = r.u8();
  if (arch > 2) throw std::runtime_error("bad architecture id in checkpoint");
  s.arch = static_cast<Architecture>(arch);
  s.filters = static_cast<int>(r.u32());
  s.dense = static_cast<int>(r.u32());
  s.planes = static_cast<int>(r.u32());
  s.height = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  s.bound = r.f64();
  s.conv_layers = static_cast<int>(r.u32());
  s.policy_size = static_cast<int>(r.u32());
  if (s.arch != Architecture::C) s.conv_layers = 0;
  CheckpointMeta meta;
  const std::uint8_t game = r.u8();
  if (game > 2) throw std::runtime_error("bad game id in checkpoint");
  meta.game.kind = static_cast<GameKind>(game);
  meta.game.rows = static_cast<int>(r.u32());
  meta.game.cols = static_cast<int>(r.u32());
  meta.game.ply_cap = static_cast<int>(r.u32());
  meta.encoding.sides = r.u8() != 0;
  const std::uint8_t h = r.u8();
  if (h > 2) throw std::runtime_error("bad heuristic id in checkpoint");
  meta.heuristic.kind = static_cast<TerminalHeuristic::Kind>(h);
  meta.step = r.u64();
  meta.games = r.u64();
  meta.seed = r.u64();
  meta.config_digest = r.str(r.u32());
  const std::uint64_t count = r.u64();
  ValueNetwork net(s, meta.seed);
  if (count != net.parameter_count())
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " parameters, spec " + s.describe() +
                             " needs " + std::to_string(net.parameter_count()));
  std::vector<float> params(count);
  for (auto& p : params) p = r.f32();
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint parameters");
  CheckpointAccess::restore(net, std::move(params), meta.step);
  return {std::move(net), meta};
}

void save_checkpoint(const std::filesystem::path& path, const ValueNetwork& net, const CheckpointMeta& meta) {
  const auto bytes = serialize_checkpoint(net, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write on checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_digest(const ValueNetwork& net, const CheckpointMeta& meta) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : serialize_checkpoint(net, meta)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace mxz

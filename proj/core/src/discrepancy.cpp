#include "dastack/discrepancy.hpp"

#include <cmath>
#include <string>

#include "dastack/errors.hpp"
#include "dastack/linalg.hpp"

namespace dastack {

const char* method_name(MethodTag tag) {
  switch (tag) {
    case MethodTag::Mmd: return "mmd";
    case MethodTag::Cmmd: return "cmmd";
    case MethodTag::LowRank: return "lowrank";
    case MethodTag::Coral: return "coral";
  }
  return "?";
}

std::optional<MethodTag> parse_method_tag(std::string_view name) {
  for (MethodTag tag :
       {MethodTag::Mmd, MethodTag::Cmmd, MethodTag::LowRank, MethodTag::Coral})
    if (name == method_name(tag)) return tag;
  return std::nullopt;
}

void validate(const DiscrepancyMethod& method) {
  if (method.tag == MethodTag::Mmd || method.tag == MethodTag::Cmmd) {
    if (method.bandwidth_scales.empty())
      throw InvalidParameterError("DiscrepancyMethod: bandwidth scale list is empty");
    for (double s : method.bandwidth_scales)
      if (!(s > 0.0))
        throw InvalidParameterError("DiscrepancyMethod: bandwidth scales must be positive");
  }
  if (method.tag == MethodTag::LowRank && !(method.alm.lambda_e > 0.0))
    throw InvalidParameterError("DiscrepancyMethod: lambda_e must be positive");
}

std::vector<double> resolve_bandwidths(const Matrix& xs, const Matrix& xt,
                                       std::span<const double> scales) {
  if (scales.empty()) throw InvalidParameterError("resolve_bandwidths: empty scale list");
  const double med = median_sq_dist(xs, xt);
  std::vector<double> out(scales.begin(), scales.end());
  for (double& b : out) b *= med;
  return out;
}

namespace {

void check_pair(const Matrix& xs, const Matrix& xt, const char* who) {
  if (xs.cols() != xt.cols())
    throw ShapeError(std::string(who) + ": feature dims differ");
  if (xs.rows() == 0 || xt.rows() == 0)
    throw DegenerateInputError(std::string(who) + ": empty input");
}

// Accumulates one RBF kernel's contribution to the squared MMD and its
// gradients. With k(a, b) = exp(-||a-b||^2 / (2 sigma2)),
// d k / d a = k * (b - a) / sigma2.
void mmd_one_bandwidth(const Matrix& xs, const Matrix& xt, double sigma2, double& value,
                       Matrix& grad_s, Matrix& grad_t) {
  const double ns = static_cast<double>(xs.rows());
  const double nt = static_cast<double>(xt.rows());
  const std::size_t dim = xs.cols();
  const Matrix kss = rbf_kernel_matrix(xs, xs, sigma2);
  const Matrix ktt = rbf_kernel_matrix(xt, xt, sigma2);
  const Matrix kst = rbf_kernel_matrix(xs, xt, sigma2);

  double sss = 0.0, stt = 0.0, sst = 0.0;
  for (double v : kss.values()) sss += v;
  for (double v : ktt.values()) stt += v;
  for (double v : kst.values()) sst += v;
  value += sss / (ns * ns) + stt / (nt * nt) - 2.0 * sst / (ns * nt);

  const double css = 2.0 / (ns * ns * sigma2);
  const double ctt = 2.0 / (nt * nt * sigma2);
  const double cst = 2.0 / (ns * nt * sigma2);
  for (std::size_t p = 0; p < xs.rows(); ++p) {
    double* g = grad_s.row(p).data();
    const double* xp = xs.row(p).data();
    for (std::size_t j = 0; j < xs.rows(); ++j) {
      const double w = css * kss(p, j);
      const double* xj = xs.row(j).data();
      for (std::size_t k = 0; k < dim; ++k) g[k] += w * (xj[k] - xp[k]);
    }
    for (std::size_t j = 0; j < xt.rows(); ++j) {
      const double w = cst * kst(p, j);
      const double* xj = xt.row(j).data();
      for (std::size_t k = 0; k < dim; ++k) g[k] -= w * (xj[k] - xp[k]);
    }
  }
  for (std::size_t q = 0; q < xt.rows(); ++q) {
    double* g = grad_t.row(q).data();
    const double* xq = xt.row(q).data();
    for (std::size_t j = 0; j < xt.rows(); ++j) {
      const double w = ctt * ktt(q, j);
      const double* xj = xt.row(j).data();
      for (std::size_t k = 0; k < dim; ++k) g[k] += w * (xj[k] - xq[k]);
    }
    for (std::size_t i = 0; i < xs.rows(); ++i) {
      const double w = cst * kst(i, q);
      const double* xi = xs.row(i).data();
      for (std::size_t k = 0; k < dim; ++k) g[k] -= w * (xi[k] - xq[k]);
    }
  }
}

}  // namespace

LossWithGrad mmd_fixed(const Matrix& xs, const Matrix& xt, std::span<const double> bandwidths) {
  check_pair(xs, xt, "mmd");
  if (bandwidths.empty()) throw InvalidParameterError("mmd: empty bandwidth list");
  LossWithGrad out;
  out.grad_source = Matrix(xs.rows(), xs.cols());
  out.grad_target = Matrix(xt.rows(), xt.cols());
  for (double b : bandwidths)
    mmd_one_bandwidth(xs, xt, b, out.value, out.grad_source, out.grad_target);
  return out;
}

LossWithGrad mmd(const Matrix& xs, const Matrix& xt, const DiscrepancyMethod& method) {
  const auto bw = resolve_bandwidths(xs, xt, method.bandwidth_scales);
  return mmd_fixed(xs, xt, bw);
}

LossWithGrad cmmd_fixed(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                        const std::vector<int>& yt_pseudo, int n_classes,
                        std::span<const double> bandwidths) {
  check_pair(xs, xt, "cmmd");
  if (ys.size() != xs.rows() || yt_pseudo.size() != xt.rows())
    throw ShapeError("cmmd: label count does not match rows");
  if (n_classes < 1) throw InvalidParameterError("cmmd: n_classes must be >= 1");

  LossWithGrad out;
  out.grad_source = Matrix(xs.rows(), xs.cols());
  out.grad_target = Matrix(xt.rows(), xt.cols());
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> is, it;
    for (std::size_t i = 0; i < ys.size(); ++i)
      if (ys[i] == c) is.push_back(i);
    for (std::size_t i = 0; i < yt_pseudo.size(); ++i)
      if (yt_pseudo[i] == c) it.push_back(i);
    if (is.empty() || it.empty()) continue;  // class missing on one side
    ++present;
    const Matrix xsc = gather_rows(xs, is);
    const Matrix xtc = gather_rows(xt, it);
    const LossWithGrad part = mmd_fixed(xsc, xtc, bandwidths);
    out.value += part.value;
    for (std::size_t i = 0; i < is.size(); ++i) {
      auto dst = out.grad_source.row(is[i]);
      auto src = part.grad_source.row(i);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    for (std::size_t i = 0; i < it.size(); ++i) {
      auto dst = out.grad_target.row(it[i]);
      auto src = part.grad_target.row(i);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  if (present == 0)
    throw NoOverlappingClassError("cmmd: no class present in both domains");
  const double inv = 1.0 / static_cast<double>(present);
  out.value *= inv;
  out.grad_source *= inv;
  out.grad_target *= inv;
  return out;
}

LossWithGrad cmmd(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                  const std::vector<int>& yt_pseudo, int n_classes,
                  const DiscrepancyMethod& method) {
  const auto bw = resolve_bandwidths(xs, xt, method.bandwidth_scales);
  return cmmd_fixed(xs, ys, xt, yt_pseudo, n_classes, bw);
}

LossWithGrad coral(const Matrix& xs, const Matrix& xt) {
  check_pair(xs, xt, "coral");
  if (xs.rows() < 2 || xt.rows() < 2)
    throw DegenerateInputError("coral: both sides need at least 2 rows");
  const std::size_t m = xs.cols();
  const Matrix cs = covariance(xs);
  const Matrix ct = covariance(xt);
  const Matrix d = cs - ct;

  LossWithGrad out;
  const double nrm = frobenius_norm(d);
  out.value = nrm * nrm / (4.0 * static_cast<double>(m * m));

  // value = tr(D^T D) / (4 m^2) with D symmetric, so d value / d centered(x)
  // = centered(x) D / (m^2 (n-1)); the centering projector leaves that
  // product unchanged because the columns of centered(x) already sum to zero.
  auto centered = [](const Matrix& x) {
    Matrix c = x;
    const std::size_t n = x.rows();
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) c(i, j) -= mean;
    }
    return c;
  };
  const double mm = static_cast<double>(m * m);
  out.grad_source = matmul(centered(xs), d);
  out.grad_source *= 1.0 / (mm * static_cast<double>(xs.rows() - 1));
  out.grad_target = matmul(centered(xt), d);
  out.grad_target *= -1.0 / (mm * static_cast<double>(xt.rows() - 1));
  return out;
}

LossWithGrad adaptation_loss(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                             const std::vector<int>& yt_pseudo, int n_classes,
                             const DiscrepancyMethod& method, MethodContext* ctx) {
  validate(method);
  switch (method.tag) {
    case MethodTag::Mmd:
    case MethodTag::Cmmd: {
      std::vector<double> bw;
      if (ctx != nullptr && ctx->filled) {
        bw = ctx->bandwidths;
      } else {
        bw = resolve_bandwidths(xs, xt, method.bandwidth_scales);
        if (ctx != nullptr) {
          ctx->bandwidths = bw;
          ctx->filled = true;
        }
      }
      if (method.tag == MethodTag::Mmd) return mmd_fixed(xs, xt, bw);
      return cmmd_fixed(xs, ys, xt, yt_pseudo, n_classes, bw);
    }
    case MethodTag::Coral:
      return coral(xs, xt);
    case MethodTag::LowRank: {
      if (ctx != nullptr && ctx->filled) return lowrank_surrogate(xs, xt, *ctx->alm);
      const AlmState st = solve_lrr(xs, xt, method.alm);
      LossWithGrad out = lowrank_surrogate(xs, xt, st);
      out.value = st.objective;
      if (ctx != nullptr) {
        ctx->alm = st;
        ctx->filled = true;
      }
      return out;
    }
  }
  throw InvalidParameterError("adaptation_loss: unknown method tag");
}

}  // namespace dastack

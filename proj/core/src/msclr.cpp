#include "msissa/msclr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "msissa/error.hpp"

namespace msissa {

std::string to_string(DeltaMode m) {
  switch (m) {
    case DeltaMode::Uniform: return "uniform";
    case DeltaMode::Stationary: return "stationary";
    case DeltaMode::Estimated: return "estimated";
  }
  return "uniform";
}

DeltaMode delta_mode_from_string(const std::string& s) {
  if (s == "uniform") return DeltaMode::Uniform;
  if (s == "stationary") return DeltaMode::Stationary;
  if (s == "estimated") return DeltaMode::Estimated;
  throw ValidationError("unknown delta mode '" + s + "' (expected uniform, stationary or estimated)");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::MSiSSA: return "msissa";
    case ModelKind::iSSA: return "issa";
    case ModelKind::CaseControlHMM: return "hmm";
    case ModelKind::MovementHMM: return "hmm-raw";
    case ModelKind::TSiSSA: return "tsissa";
  }
  return "msissa";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "msissa") return ModelKind::MSiSSA;
  if (s == "issa") return ModelKind::iSSA;
  if (s == "hmm" || s == "cchmm") return ModelKind::CaseControlHMM;
  if (s == "hmm-raw") return ModelKind::MovementHMM;
  if (s == "tsissa") return ModelKind::TSiSSA;
  throw ValidationError("unknown model '" + s + "' (expected msissa, issa, hmm, hmm-raw or tsissa)");
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma) {
  const Eigen::Index n = gamma.rows();
  if (n < 1 || gamma.cols() != n) throw ValidationError("transition matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(gamma.row(i).sum() - 1.0) > 1e-10 || (gamma.row(i).array() < 0.0).any())
      throw ValidationError("transition matrix must be row-stochastic");
  // delta (I - Gamma + U) = 1' with U the all-ones matrix.
  const Eigen::MatrixXd A =
      (Eigen::MatrixXd::Identity(n, n) - gamma + Eigen::MatrixXd::Ones(n, n)).transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  if (lu.rank() < n) throw NumericError("transition matrix is reducible; no unique stationary distribution");
  Eigen::VectorXd d = lu.solve(Eigen::VectorXd::Ones(n));
  return d / d.sum();
}

Eigen::VectorXd MsParams::initial() const {
  const int n = n_states();
  switch (delta_mode) {
    case DeltaMode::Uniform: return Eigen::VectorXd::Constant(n, 1.0 / n);
    case DeltaMode::Stationary: return n == 1 ? Eigen::VectorXd::Ones(1) : stationary_distribution(gamma);
    case DeltaMode::Estimated: return delta;
  }
  return Eigen::VectorXd::Constant(n, 1.0 / n);
}

Eigen::VectorXd MsParams::coef(int i) const {
  const auto& s = states.at(static_cast<std::size_t>(i));
  Eigen::VectorXd c(static_cast<Eigen::Index>(s.theta.size() + s.beta.size()));
  for (std::size_t k = 0; k < s.theta.size(); ++k) c[static_cast<Eigen::Index>(k)] = s.theta[k];
  for (std::size_t k = 0; k < s.beta.size(); ++k)
    c[static_cast<Eigen::Index>(s.theta.size() + k)] = s.beta[k];
  return c;
}

void MsParams::validate(std::size_t p, std::size_t q) const {
  const int n = n_states();
  if (n < 1) throw ValidationError("at least one state is required");
  if (gamma.rows() != n || gamma.cols() != n)
    throw ValidationError("transition matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    if ((gamma.row(i).array() < 0.0).any() || std::abs(gamma.row(i).sum() - 1.0) > 1e-10)
      throw ValidationError("transition matrix row " + std::to_string(i + 1) + " is not a probability vector");
  }
  if (delta_mode == DeltaMode::Estimated) {
    if (delta.size() != n || (delta.array() < 0.0).any() || std::abs(delta.sum() - 1.0) > 1e-10)
      throw ValidationError("initial distribution must be a probability vector of length N");
  }
  for (const auto& s : states) {
    if (s.theta.size() != p)
      throw ValidationError("movement coefficient vector has length " + std::to_string(s.theta.size()) +
                            ", expected " + std::to_string(p));
    if (s.beta.size() != q)
      throw ValidationError("selection coefficient vector has length " + std::to_string(s.beta.size()) +
                            ", expected " + std::to_string(q));
    for (double v : s.theta)
      if (!std::isfinite(v)) throw ValidationError("movement coefficients must be finite");
    for (double v : s.beta)
      if (!std::isfinite(v)) throw ValidationError("selection coefficients must be finite");
  }
}

Eigen::VectorXd case_logprobs(const Eigen::VectorXd& coef, const CaseControlData& data) {
  if (static_cast<std::size_t>(coef.size()) != data.p() + data.q())
    throw ValidationError("coefficient vector length does not match the covariate columns");
  Eigen::VectorXd eta = data.design * coef;
  if (data.has_offset())
    eta += Eigen::Map<const Eigen::VectorXd>(data.offset.data(), static_cast<Eigen::Index>(data.offset.size()));
  const std::size_t n = data.n_sets();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const auto b = static_cast<Eigen::Index>(data.set_begin[s]);
    const auto len = static_cast<Eigen::Index>(data.set_begin[s + 1]) - b;
    const auto seg = eta.segment(b, len);
    const double m = seg.maxCoeff();
    const double lse = m + std::log((seg.array() - m).exp().sum());
    out[static_cast<Eigen::Index>(s)] = eta[b] - lse;
  }
  return out;
}

Eigen::MatrixXd case_logprobs(const MsParams& params, const CaseControlData& data) {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(data.n_sets()), params.n_states());
  for (int i = 0; i < params.n_states(); ++i) e.col(i) = case_logprobs(params.coef(i), data);
  return e;
}

Eigen::VectorXd choice_logprobs(const MsParams& params, int state, const CaseControlData& data,
                                std::size_t set) {
  if (state < 0 || state >= params.n_states()) throw ValidationError("state index out of range");
  if (set >= data.n_sets()) throw ValidationError("choice-set index out of range");
  const Eigen::VectorXd c = params.coef(state);
  if (static_cast<std::size_t>(c.size()) != data.p() + data.q())
    throw ValidationError("coefficient vector length does not match the covariate columns");
  const auto b = static_cast<Eigen::Index>(data.set_begin[set]);
  const auto len = static_cast<Eigen::Index>(data.set_size(set));
  Eigen::VectorXd eta = data.design.middleRows(b, len) * c;
  if (data.has_offset())
    for (Eigen::Index r = 0; r < len; ++r) eta[r] += data.offset[static_cast<std::size_t>(b + r)];
  const double m = eta.maxCoeff();
  const double lse = m + std::log((eta.array() - m).exp().sum());
  return (eta.array() - lse).matrix();
}

double forward_loglik(const MsParams& params, const CaseControlData& data) {
  params.validate(data.p(), data.q());
  const Eigen::MatrixXd e = case_logprobs(params, data);
  return hmm_forward_loglik(e, params.gamma, params.initial(), data.burst_ranges());
}

std::vector<int> viterbi(const MsParams& params, const CaseControlData& data) {
  params.validate(data.p(), data.q());
  const Eigen::MatrixXd e = case_logprobs(params, data);
  return hmm_viterbi(e, params.gamma, params.initial(), data.burst_ranges());
}

// ---------------------------------------------------------------------------

Parameterization::Parameterization(MovementKernelSpec kernel, SamplingScheme scheme, int n_states,
                                   std::size_t q, DeltaMode delta_mode, bool beta_fixed_zero)
    : kernel_(kernel),
      scheme_(std::move(scheme)),
      n_states_(n_states),
      q_(q),
      delta_mode_(delta_mode),
      beta_fixed_(beta_fixed_zero) {
  if (n_states < 1) throw ValidationError("at least one state is required");
  scheme_.validate(kernel_);
  const auto names = kernel_.natural_names();
  n_nat_ = names.size();
  for (const auto& n : names) log_scale_.push_back(n != "mu");
  per_state_ = n_nat_ + (beta_fixed_ ? 0 : q_);
  const auto n = static_cast<std::size_t>(n_states_);
  size_ = n * per_state_ + n * (n - 1) + (delta_mode_ == DeltaMode::Estimated ? n - 1 : 0);
}

int Parameterization::owner(std::size_t j) const {
  const std::size_t block = static_cast<std::size_t>(n_states_) * per_state_;
  return j < block ? static_cast<int>(j / per_state_) : -1;
}

std::vector<std::string> Parameterization::names() const {
  std::vector<std::string> out;
  const auto nat = kernel_.natural_names();
  for (int i = 0; i < n_states_; ++i) {
    const std::string sfx = "[" + std::to_string(i + 1) + "]";
    for (std::size_t k = 0; k < n_nat_; ++k)
      out.push_back((log_scale_[k] ? "log_" : "") + nat[k] + sfx);
    if (!beta_fixed_)
      for (std::size_t k = 0; k < q_; ++k) out.push_back("beta_" + std::to_string(k + 1) + sfx);
  }
  for (int i = 0; i < n_states_; ++i)
    for (int j = 0; j < n_states_; ++j)
      if (i != j) out.push_back("logit_gamma[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]");
  if (delta_mode_ == DeltaMode::Estimated)
    for (int j = 1; j < n_states_; ++j) out.push_back("logit_delta[" + std::to_string(j + 1) + "]");
  return out;
}

Eigen::VectorXd Parameterization::to_working(const MsParams& params) const {
  if (params.n_states() != n_states_) throw ValidationError("parameter bundle has the wrong number of states");
  params.validate(kernel_.n_coef(), q_);
  Eigen::VectorXd w(static_cast<Eigen::Index>(size_));
  std::size_t pos = 0;
  for (int i = 0; i < n_states_; ++i) {
    const auto& s = params.states[static_cast<std::size_t>(i)];
    const auto nat = natural_values(coef_to_natural(kernel_, scheme_, s.theta));
    for (std::size_t k = 0; k < n_nat_; ++k) {
      if (log_scale_[k] && !(nat[k] > 0.0))
        throw InvalidParameterError(kernel_.natural_names()[k], nat[k]);
      w[static_cast<Eigen::Index>(pos++)] = log_scale_[k] ? std::log(nat[k]) : nat[k];
    }
    if (!beta_fixed_)
      for (std::size_t k = 0; k < q_; ++k) w[static_cast<Eigen::Index>(pos++)] = s.beta[k];
  }
  for (int i = 0; i < n_states_; ++i)
    for (int j = 0; j < n_states_; ++j) {
      if (i == j) continue;
      const double gii = params.gamma(i, i), gij = params.gamma(i, j);
      if (!(gii > 0.0) || !(gij > 0.0))
        throw ValidationError("transition probabilities must be strictly positive for estimation");
      w[static_cast<Eigen::Index>(pos++)] = std::log(gij / gii);
    }
  if (delta_mode_ == DeltaMode::Estimated) {
    if ((params.delta.array() <= 0.0).any())
      throw ValidationError("initial probabilities must be strictly positive for estimation");
    for (int j = 1; j < n_states_; ++j)
      w[static_cast<Eigen::Index>(pos++)] = std::log(params.delta[j] / params.delta[0]);
  }
  return w;
}

std::vector<double> Parameterization::state_natural(const Eigen::VectorXd& w, int i) const {
  std::vector<double> nat(n_nat_);
  const std::size_t off = state_offset(i);
  for (std::size_t k = 0; k < n_nat_; ++k) {
    const double v = w[static_cast<Eigen::Index>(off + k)];
    nat[k] = log_scale_[k] ? std::exp(v) : v;
  }
  return nat;
}

Eigen::VectorXd Parameterization::state_coef(const Eigen::VectorXd& w, int i) const {
  const auto nat = state_natural(w, i);
  const auto theta = natural_to_coef(kernel_, scheme_, kernel_from_values(kernel_, nat));
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.size() + q_));
  for (std::size_t k = 0; k < theta.size(); ++k) c[static_cast<Eigen::Index>(k)] = theta[k];
  if (!beta_fixed_) {
    const std::size_t off = state_offset(i) + n_nat_;
    for (std::size_t k = 0; k < q_; ++k)
      c[static_cast<Eigen::Index>(theta.size() + k)] = w[static_cast<Eigen::Index>(off + k)];
  }
  return c;
}

Eigen::MatrixXd Parameterization::gamma(const Eigen::VectorXd& w) const {
  const int n = n_states_;
  Eigen::MatrixXd g(n, n);
  std::size_t pos = static_cast<std::size_t>(n) * per_state_;
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    std::vector<double> eta(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      eta[static_cast<std::size_t>(j)] = w[static_cast<Eigen::Index>(pos++)];
      m = std::max(m, eta[static_cast<std::size_t>(j)]);
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(eta[static_cast<std::size_t>(j)] - m);
    for (int j = 0; j < n; ++j) g(i, j) = std::exp(eta[static_cast<std::size_t>(j)] - m) / s;
  }
  return g;
}

Eigen::VectorXd Parameterization::initial(const Eigen::VectorXd& w) const {
  const int n = n_states_;
  switch (delta_mode_) {
    case DeltaMode::Uniform: return Eigen::VectorXd::Constant(n, 1.0 / n);
    case DeltaMode::Stationary: return n == 1 ? Eigen::VectorXd::Ones(1) : stationary_distribution(gamma(w));
    case DeltaMode::Estimated: {
      const std::size_t pos = static_cast<std::size_t>(n) * per_state_ + static_cast<std::size_t>(n * (n - 1));
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
      for (int j = 1; j < n; ++j) eta[j] = w[static_cast<Eigen::Index>(pos + static_cast<std::size_t>(j - 1))];
      const double m = eta.maxCoeff();
      Eigen::VectorXd d = (eta.array() - m).exp().matrix();
      return d / d.sum();
    }
  }
  return Eigen::VectorXd::Constant(n, 1.0 / n);
}

MsParams Parameterization::to_params(const Eigen::VectorXd& w) const {
  if (static_cast<std::size_t>(w.size()) != size_) throw ValidationError("working vector has the wrong length");
  MsParams p;
  p.gamma = gamma(w);
  p.delta_mode = delta_mode_;
  p.delta = initial(w);
  const std::size_t pc = kernel_.n_coef();
  for (int i = 0; i < n_states_; ++i) {
    const Eigen::VectorXd c = state_coef(w, i);
    StateCoefficients s;
    s.theta.assign(c.data(), c.data() + pc);
    s.beta.assign(c.data() + pc, c.data() + c.size());
    p.states.push_back(std::move(s));
  }
  return p;
}

// ---------------------------------------------------------------------------

MsObjective::MsObjective(const CaseControlData& data, const Parameterization& param)
    : data_(data), param_(param), bursts_(data.burst_ranges()) {
  if (param_.q() != data_.q() || !(param_.kernel() == data_.kernel))
    throw ValidationError("parameterization does not match the case-control data");
}

Eigen::MatrixXd MsObjective::emissions(const Eigen::VectorXd& w) const {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(data_.n_sets()), param_.n_states());
  for (int i = 0; i < param_.n_states(); ++i) e.col(i) = case_logprobs(param_.state_coef(w, i), data_);
  return e;
}

double MsObjective::loglik(const Eigen::VectorXd& w) const {
  return hmm_forward_loglik(emissions(w), param_.gamma(w), param_.initial(w), bursts_);
}

double MsObjective::loglik_cached(const Eigen::VectorXd& w, const Eigen::VectorXd& base,
                                  const Eigen::MatrixXd& base_emission) const {
  Eigen::MatrixXd e = base_emission;
  const auto len = static_cast<Eigen::Index>(param_.per_state());
  for (int i = 0; i < param_.n_states(); ++i) {
    const auto off = static_cast<Eigen::Index>(param_.state_offset(i));
    if (len > 0 && w.segment(off, len) != base.segment(off, len))
      e.col(i) = case_logprobs(param_.state_coef(w, i), data_);
  }
  return hmm_forward_loglik(e, param_.gamma(w), param_.initial(w), bursts_);
}

Eigen::VectorXd MsObjective::gradient(const Eigen::VectorXd& w, double* ll) const {
  const Eigen::MatrixXd e0 = emissions(w);
  if (ll) *ll = hmm_forward_loglik(e0, param_.gamma(w), param_.initial(w), bursts_);
  Eigen::VectorXd g(w.size());
  Eigen::VectorXd y = w;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double h = central_step(w[j]);
    y[j] = w[j] + h;
    const double fp = loglik_cached(y, w, e0);
    y[j] = w[j] - h;
    const double fm = loglik_cached(y, w, e0);
    y[j] = w[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd MsObjective::hessian(const Eigen::VectorXd& w, double rel_step) const {
  const Eigen::MatrixXd e0 = emissions(w);
  const double f0 = hmm_forward_loglik(e0, param_.gamma(w), param_.initial(w), bursts_);
  const Eigen::Index n = w.size();
  Eigen::VectorXd h(n);
  for (Eigen::Index j = 0; j < n; ++j) h[j] = rel_step * std::max(1.0, std::abs(w[j]));
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd y = w;
  for (Eigen::Index j = 0; j < n; ++j) {
    y[j] = w[j] + h[j];
    const double fp = loglik_cached(y, w, e0);
    y[j] = w[j] - h[j];
    const double fm = loglik_cached(y, w, e0);
    y[j] = w[j];
    H(j, j) = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
    for (Eigen::Index k = 0; k < j; ++k) {
      double f[4];
      const double sj[4] = {1, 1, -1, -1}, sk[4] = {1, -1, 1, -1};
      for (int c = 0; c < 4; ++c) {
        y[j] = w[j] + sj[c] * h[j];
        y[k] = w[k] + sk[c] * h[k];
        f[c] = loglik_cached(y, w, e0);
      }
      y[j] = w[j];
      y[k] = w[k];
      H(j, k) = H(k, j) = (f[0] - f[1] - f[2] + f[3]) / (4.0 * h[j] * h[k]);
    }
  }
  return H;
}

// ---------------------------------------------------------------------------

std::vector<NaturalKernel> FitResult::natural_kernels() const {
  std::vector<NaturalKernel> out;
  for (const auto& s : params.states) out.push_back(coef_to_natural(kernel, scheme, s.theta));
  return out;
}

MsParams permute_states(const MsParams& params, const std::vector<int>& perm) {
  const int n = params.n_states();
  if (static_cast<int>(perm.size()) != n) throw ValidationError("permutation has the wrong length");
  MsParams out = params;
  for (int a = 0; a < n; ++a) {
    out.states[static_cast<std::size_t>(a)] = params.states[static_cast<std::size_t>(perm[a])];
    for (int b = 0; b < n; ++b) out.gamma(a, b) = params.gamma(perm[a], perm[b]);
    if (params.delta.size() == n) out.delta[a] = params.delta[perm[a]];
  }
  return out;
}

MsParams order_states(const MsParams& params, const MovementKernelSpec& kernel,
                      const SamplingScheme& scheme) {
  const int n = params.n_states();
  std::vector<double> mean(static_cast<std::size_t>(n)), b1(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& s = params.states[static_cast<std::size_t>(i)];
    mean[static_cast<std::size_t>(i)] = step_mean(coef_to_natural(kernel, scheme, s.theta).step);
    if (!s.beta.empty()) b1[static_cast<std::size_t>(i)] = s.beta[0];
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    if (mean[a] != mean[b]) return mean[a] < mean[b];
    return b1[a] < b1[b];
  });
  return permute_states(params, perm);
}

std::uint64_t fingerprint(const CaseControlData& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  };
  mix(data.design.data(), static_cast<std::size_t>(data.design.size()) * sizeof(double));
  mix(data.set_begin.data(), data.set_begin.size() * sizeof(std::size_t));
  mix(data.offset.data(), data.offset.size() * sizeof(double));
  return h;
}

namespace {

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    y[j] = x[j] + h;
    const Eigen::VectorXd fp = f(y);
    y[j] = x[j] - h;
    const Eigen::VectorXd fm = f(y);
    y[j] = x[j];
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

double two_sided_p(double estimate, double se) {
  if (!(se > 0.0) || !std::isfinite(se)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

}  // namespace

void wald_inference(FitResult& fit, const CaseControlData& data, double hessian_step) {
  const int n = fit.params.n_states();
  Parameterization param(fit.kernel, fit.scheme, n, data.q(), fit.params.delta_mode, fit.beta_fixed_zero);
  MsObjective obj(data, param);
  const Eigen::VectorXd w = param.to_working(fit.params);
  fit.working = w;

  fit.inference.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i)
    fit.inference[static_cast<std::size_t>(i)].natural = param.state_natural(w, i);

  const Eigen::MatrixXd H = obj.hessian(w, hessian_step);
  const Eigen::MatrixXd info = -H;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  const bool finite = H.allFinite();
  if (!finite || llt.info() != Eigen::Success) {
    fit.se_available = false;
    fit.diagnostics.hessian_not_pd = true;
    return;
  }
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  if (!cov.allFinite() || (cov.diagonal().array() <= 0.0).any()) {
    fit.se_available = false;
    fit.diagnostics.hessian_not_pd = true;
    return;
  }
  fit.se_available = true;
  fit.diagnostics.hessian_not_pd = false;

  const std::size_t per = param.per_state();
  const std::size_t pc = fit.kernel.n_coef();
  const auto names = fit.kernel.natural_names();
  for (int i = 0; i < n; ++i) {
    auto& inf = fit.inference[static_cast<std::size_t>(i)];
    const auto off = static_cast<Eigen::Index>(param.state_offset(i));
    const auto len = static_cast<Eigen::Index>(per);
    const Eigen::MatrixXd cov_i = cov.block(off, off, len, len);
    const Eigen::VectorXd wi = w.segment(off, len);
    auto coef_of = [&](const Eigen::VectorXd& seg) {
      Eigen::VectorXd full = w;
      full.segment(off, len) = seg;
      return param.state_coef(full, i);
    };
    const Eigen::MatrixXd J = numeric_jacobian(coef_of, wi);
    const Eigen::VectorXd var = (J * cov_i * J.transpose()).diagonal();
    const Eigen::VectorXd c = param.state_coef(w, i);
    inf.se_theta.clear();
    inf.p_theta.clear();
    inf.se_beta.clear();
    inf.p_beta.clear();
    for (std::size_t k = 0; k < pc; ++k) {
      const double se = std::sqrt(std::max(0.0, var[static_cast<Eigen::Index>(k)]));
      inf.se_theta.push_back(se);
      inf.p_theta.push_back(two_sided_p(c[static_cast<Eigen::Index>(k)], se));
    }
    for (std::size_t k = 0; k < data.q(); ++k) {
      const auto idx = static_cast<Eigen::Index>(pc + k);
      if (fit.beta_fixed_zero) {
        inf.se_beta.push_back(std::numeric_limits<double>::quiet_NaN());
        inf.p_beta.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const double se = std::sqrt(std::max(0.0, var[idx]));
      inf.se_beta.push_back(se);
      inf.p_beta.push_back(two_sided_p(c[idx], se));
    }
    inf.se_natural.clear();
    for (std::size_t k = 0; k < names.size(); ++k) {
      const double sd = std::sqrt(cov_i(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
      const double scale = names[k] == "mu" ? 1.0 : inf.natural[k];
      inf.se_natural.push_back(sd * scale);
    }
  }
}

void compute_diagnostics(FitResult& fit, const CaseControlData& data) {
  fit.states = viterbi(fit.params, data);
  const int n = fit.params.n_states();
  auto& d = fit.diagnostics;
  d.occupancy.assign(static_cast<std::size_t>(n), 0.0);
  for (int s : fit.states) d.occupancy[static_cast<std::size_t>(s)] += 1.0;
  for (auto& o : d.occupancy) o /= std::max<std::size_t>(1, fit.states.size());
  d.near_empty_state = false;
  if (n >= 2)
    for (double o : d.occupancy)
      if (o < 0.01) d.near_empty_state = true;

  d.boundary_parameter = false;
  d.low_step_variance = false;
  const auto names = fit.kernel.natural_names();
  for (const auto& k : fit.natural_kernels()) {
    const auto nat = natural_values(k);
    for (std::size_t j = 0; j < nat.size(); ++j)
      if (names[j] != "mu" && nat[j] < 1e-4) d.boundary_parameter = true;
    if (step_variance(k.step) < 0.1) d.low_step_variance = true;
  }
  d.all_low_persistence = false;
  if (n >= 2) {
    d.all_low_persistence = true;
    for (int i = 0; i < n; ++i)
      if (fit.params.gamma(i, i) >= 0.2) d.all_low_persistence = false;
  }
}

FitResult maximize(const CaseControlData& data, const MsParams& start, bool beta_fixed_zero,
                   const FitOptions& options) {
  data.validate();
  start.validate(data.p(), data.q());
  const int n = start.n_states();
  Parameterization param(data.kernel, data.scheme, n, data.q(), start.delta_mode, beta_fixed_zero);
  MsObjective obj(data, param);

  MsParams s0 = start;
  if (beta_fixed_zero)
    for (auto& st : s0.states) std::fill(st.beta.begin(), st.beta.end(), 0.0);
  const Eigen::VectorXd w0 = param.to_working(s0);
  double ll0;
  try {
    ll0 = obj.loglik(w0);
  } catch (const NumericError& e) {
    throw NumericError(std::string("log-likelihood is not finite at the starting values: ") + e.what());
  }
  if (!std::isfinite(ll0)) throw NumericError("log-likelihood is not finite at the starting values");

  auto negll = [&](const Eigen::VectorXd& w, Eigen::VectorXd& g) {
    try {
      double ll = 0.0;
      g = -obj.gradient(w, &ll);
      if (!std::isfinite(ll) || !g.allFinite()) return std::numeric_limits<double>::infinity();
      return -ll;
    } catch (const Error&) {
      g.setZero(w.size());
      return std::numeric_limits<double>::infinity();
    }
  };
  const BfgsResult r = bfgs_minimize(negll, w0, options.bfgs);

  FitResult fit;
  fit.kind = n == 1 ? ModelKind::iSSA : (beta_fixed_zero ? ModelKind::CaseControlHMM : ModelKind::MSiSSA);
  fit.kernel = data.kernel;
  fit.scheme = data.scheme;
  fit.habitat_names = data.habitat_names;
  fit.beta_fixed_zero = beta_fixed_zero;
  fit.params = order_states(param.to_params(r.x), data.kernel, data.scheme);
  fit.loglik = -r.value;
  fit.grad_norm = r.gradient.lpNorm<Eigen::Infinity>();
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.ll_per_start = {fit.loglik};
  fit.converged_per_start = {fit.converged};
  fit.n_free = param.size();
  fit.n_obs = data.n_sets();
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(fit.n_free);
  fit.bic = -2.0 * fit.loglik + static_cast<double>(fit.n_free) * std::log(static_cast<double>(fit.n_obs));
  fit.data_fingerprint = fingerprint(data);
  fit.working = param.to_working(fit.params);
  if (options.compute_se) wald_inference(fit, data, options.hessian_step);
  compute_diagnostics(fit, data);
  return fit;
}

}  // namespace msissa

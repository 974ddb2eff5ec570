#include "transport/rbm.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace transport {

namespace {

constexpr double kEdgeTol = 1e-12;
constexpr double kCacheFloor = 1e-6;

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_lock;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard g(error_lock);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Distance travelled from x against s before leaving the unit square.
double exit_time(const Vec2& x, double c, double s) {
  double t = std::numeric_limits<double>::infinity();
  if (c > 1e-15) t = std::min(t, x.x / c);
  if (s > 1e-15) t = std::min(t, x.y / s);
  return std::isfinite(t) ? t : 0.0;
}

// int_a^b exp(-kappa tau) dtau
double damped_length(double a, double b, double kappa) {
  if (kappa == 0.0) return b - a;
  return (std::exp(-kappa * a) - std::exp(-kappa * b)) / kappa;
}

bool on_edge(const Vec2& x, int edge) {
  switch (edge) {
    case 0: return std::abs(x.x - 1.0) < kEdgeTol;
    case 1: return std::abs(x.y - 1.0) < kEdgeTol;
    case 2: return std::abs(x.x) < kEdgeTol;
    default: return std::abs(x.y) < kEdgeTol;
  }
}

SparseMatrix edge_penalty(const TestSpace& V, int edge) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t k = 0; k < V.num_nodes(); ++k) {
    const auto d = V.dof(k);
    if (d >= 0 && on_edge(V.node_positions()[k], edge)) t.emplace_back(d, d, kOutflowPenalty);
  }
  SparseMatrix P(V.dim(), V.dim());
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

AdjointCoefficients affine_piece(std::size_t k, double kappa) {
  AdjointCoefficients a;
  switch (k) {
    case 0: a.beta = [](const Vec2&) { return Vec2{1.0, 0.0}; }; a.gamma = [](const Vec2&) { return 0.0; }; break;
    case 1: a.beta = [](const Vec2&) { return Vec2{0.0, 1.0}; }; a.gamma = [](const Vec2&) { return 0.0; }; break;
    default: a.beta = [](const Vec2&) { return Vec2{0.0, 0.0}; }; a.gamma = [kappa](const Vec2&) { return kappa; };
  }
  return a;
}

Eigen::MatrixXd project_sym(const SparseMatrix& A, const Eigen::MatrixXd& V) {
  return V.transpose() * (A * V);
}

// Orthonormalizes v against the columns of Q (two passes). Returns the
// remaining norm relative to the input norm.
double orthogonalize(const Eigen::MatrixXd& Q, Eigen::VectorXd& v) {
  const double n0 = v.norm();
  if (n0 == 0.0) return 0.0;
  for (int pass = 0; pass < 2; ++pass)
    if (Q.cols() > 0) v -= Q * (Q.transpose() * v);
  const double n1 = v.norm();
  if (n1 > 0.0) v /= n1;
  return n1 / n0;
}

void append_column(Eigen::MatrixXd& Q, const Eigen::VectorXd& v) {
  Q.conservativeResize(v.size(), Q.cols() + 1);
  Q.col(Q.cols() - 1) = v;
}

struct WorstCase {
  double beta = std::numeric_limits<double>::infinity();
  std::size_t index = 0;
  Eigen::VectorXd w;
};

WorstCase worst_inf_sup(const TruthModel& truth, const ReducedModel& m, int jobs) {
  std::vector<double> beta(truth.size());
  std::vector<Eigen::VectorXd> worst(truth.size());
  parallel_for(truth.size(), jobs, [&](std::size_t i) { beta[i] = reduced_inf_sup(m, truth.angle(i), &worst[i]); });
  WorstCase wc;
  for (std::size_t i = 0; i < beta.size(); ++i)
    if (beta[i] < wc.beta) {
      wc.beta = beta[i];
      wc.index = i;
    }
  wc.w = worst[wc.index];
  return wc;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& A) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    std::vector<double> r(A.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j) r[j] = A(i, j);
    rows.push_back(r);
  }
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd A(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& rows = j.at("data");
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index k = 0; k < A.cols(); ++k) A(i, k) = rows.at(i).at(k).get<double>();
  return A;
}

}  // namespace

std::vector<double> ParametricProblem::quarter_circle(std::size_t n) {
  std::vector<double> a(n);
  if (n == 1) {
    a[0] = std::numbers::pi / 4;
    return a;
  }
  for (std::size_t i = 0; i < n; ++i) a[i] = 0.5 * std::numbers::pi * double(i) / double(n - 1);
  return a;
}

ParametricProblem ParametricProblem::example1(std::size_t n_train, double kappa) {
  ParametricProblem pp;
  pp.kappa = kappa;
  pp.angles = quarter_circle(n_train);
  pp.f.value = [](const Vec2&, bool) { return 1.0; };
  const double k = pp.kappa;
  pp.exact = [k](double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    PiecewiseSmooth u;
    u.value = [c, s, k](const Vec2& x, bool) { return damped_length(0.0, exit_time(x, c, s), k); };
    return u;
  };
  return pp;
}

ParametricProblem ParametricProblem::example2(std::size_t n_train, double kappa) {
  ParametricProblem pp;
  pp.kappa = kappa;
  pp.angles = quarter_circle(n_train);
  pp.f.value = [](const Vec2&, bool right) { return right ? 1.0 : 0.5; };
  pp.f.curve = GraphCurve{[](double y) { return y; }};
  const double k = pp.kappa;
  pp.exact = [k](double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    PiecewiseSmooth u;
    u.value = [c, s, k](const Vec2& x, bool) {
      const double t = exit_time(x, c, s);
      // x1 - x2 along the backward ray is (x1 - x2) - tau (c - s).
      const double d0 = x.x - x.y, rate = c - s;
      auto f_at = [&](double tau) { return d0 - tau * rate > 0.0 ? 1.0 : 0.5; };
      double cross = t;
      if (rate != 0.0) {
        const double tc = d0 / rate;
        if (tc > 0.0 && tc < t) cross = tc;
      }
      double v = f_at(0.5 * cross) * damped_length(0.0, cross, k);
      if (cross < t) v += f_at(0.5 * (cross + t)) * damped_length(cross, t, k);
      return v;
    };
    return u;
  };
  return pp;
}

// ---------------------------------------------------------------------------

TruthModel::TruthModel(ParametricProblem pp) : pp_(std::move(pp)) {
  Partition part = Partition::uniform(pp_.truth_grid);
  const VelocityField none = [](const Vec2&) { return Vec2{0.0, 0.0}; };
  V_ = std::make_unique<TestSpace>(part, none, pp_.truth_test);
  X_ = std::make_unique<TrialSpace>(std::move(part));

  std::array<AdjointCoefficients, kAffineTerms> a;
  for (std::size_t k = 0; k < kAffineTerms; ++k) a[k] = affine_piece(k, pp_.kappa);
  for (std::size_t k = 0; k < kAffineTerms; ++k) {
    B_[k] = assemble_B(*X_, *V_, a[k]);
    for (std::size_t l = 0; l < kAffineTerms; ++l) G_[k][l] = assemble_gram(*V_, a[k], a[l]);
  }
  for (int e = 0; e < 4; ++e) P_[e] = edge_penalty(*V_, e);
  rhs_ = assemble_load(*V_, pp_.f);

  grams_.resize(size());
  truths_.resize(size());
  for (std::size_t i = 0; i < size(); ++i) locks_.push_back(std::make_unique<std::mutex>());
}

std::array<double, kAffineTerms> TruthModel::theta(double phi) { return {std::cos(phi), std::sin(phi), 1.0}; }

std::array<bool, 4> TruthModel::outflow_edges(double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  constexpr double tol = 1e-14;
  return {c > tol, s > tol, c < -tol, s < -tol};
}

SparseMatrix TruthModel::B(double phi) const {
  const auto th = theta(phi);
  SparseMatrix out = th[0] * B_[0];
  for (std::size_t k = 1; k < kAffineTerms; ++k) out += th[k] * B_[k];
  return out;
}

SparseMatrix TruthModel::G(double phi) const {
  const auto th = theta(phi);
  SparseMatrix out(V_->dim(), V_->dim());
  for (std::size_t k = 0; k < kAffineTerms; ++k)
    for (std::size_t l = 0; l < kAffineTerms; ++l) out += (th[k] * th[l]) * G_[k][l];
  const auto out_edges = outflow_edges(phi);
  for (int e = 0; e < 4; ++e)
    if (out_edges[e]) out += P_[e];
  return out;
}

SparseMatrix TruthModel::B_direct(double phi) const {
  return assemble_B(*X_, *V_, TransportProblem::constant(ParametricProblem::direction(phi), pp_.kappa, 0.0));
}

SparseMatrix TruthModel::G_direct(double phi) const {
  SparseMatrix out = assemble_gram_Y(*V_, TransportProblem::constant(ParametricProblem::direction(phi), pp_.kappa, 0.0));
  const Vec2 s = ParametricProblem::direction(phi);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t k = 0; k < V_->num_nodes(); ++k) {
    const auto d = V_->dof(k);
    if (d < 0) continue;
    const Vec2& x = V_->node_positions()[k];
    // Count every outflow edge through the node (corners can sit on two).
    int hits = 0;
    if (on_edge(x, 0) && s.x > 1e-14) ++hits;
    if (on_edge(x, 1) && s.y > 1e-14) ++hits;
    if (on_edge(x, 2) && s.x < -1e-14) ++hits;
    if (on_edge(x, 3) && s.y < -1e-14) ++hits;
    if (hits > 0) t.emplace_back(d, d, hits * kOutflowPenalty);
  }
  SparseMatrix P(V_->dim(), V_->dim());
  P.setFromTriplets(t.begin(), t.end());
  return out + P;
}

const GramSolver& TruthModel::gram(std::size_t i) const {
  std::lock_guard g(*locks_[i]);
  if (!grams_[i]) grams_[i] = std::make_unique<GramSolver>(G(angle(i)));
  return *grams_[i];
}

const SaddleState& TruthModel::truth_solve(std::size_t i) const {
  const GramSolver& gs = gram(i);
  std::lock_guard g(*locks_[i]);
  if (!truths_[i]) {
    SaddleOperators ops{B(angle(i)), G(angle(i)), rhs_};
    truths_[i] = std::make_unique<SaddleState>(solve_saddle(ops, gs));
  }
  return *truths_[i];
}

SaddleState TruthModel::truth_solve_at(double phi) const {
  SaddleOperators ops{B(phi), G(phi), rhs_};
  return solve_saddle(ops, GramSolver(ops.G));
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd ReducedModel::reduced_B(double phi) const {
  const auto th = TruthModel::theta(phi);
  Eigen::MatrixXd out = th[0] * B[0];
  for (std::size_t k = 1; k < kAffineTerms; ++k) out += th[k] * B[k];
  return out;
}

Eigen::MatrixXd ReducedModel::reduced_G(double phi) const {
  const auto th = TruthModel::theta(phi);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(test.cols(), test.cols());
  for (std::size_t k = 0; k < kAffineTerms; ++k)
    for (std::size_t l = 0; l < kAffineTerms; ++l) out += (th[k] * th[l]) * G[k][l];
  const auto out_edges = TruthModel::outflow_edges(phi);
  for (int e = 0; e < 4; ++e)
    if (out_edges[e]) out += P[e];
  return out;
}

void ReducedModel::project(const TruthModel& truth) {
  for (std::size_t k = 0; k < kAffineTerms; ++k) {
    B[k] = test.transpose() * (truth.B_terms()[k] * trial);
    for (std::size_t l = 0; l < kAffineTerms; ++l) G[k][l] = project_sym(truth.G_term(k, l), test);
  }
  for (int e = 0; e < 4; ++e) P[e] = project_sym(truth.penalties()[e], test);
  rhs = test.transpose() * truth.rhs();
}

nlohmann::json ReducedModel::to_json() const {
  nlohmann::json j;
  j["trial"] = matrix_json(trial);
  j["test"] = matrix_json(test);
  for (std::size_t k = 0; k < kAffineTerms; ++k) {
    j["B"].push_back(matrix_json(B[k]));
    for (std::size_t l = 0; l < kAffineTerms; ++l) j["G"].push_back(matrix_json(G[k][l]));
  }
  for (const auto& p : P) j["P"].push_back(matrix_json(p));
  j["rhs"] = std::vector<double>(rhs.data(), rhs.data() + rhs.size());
  j["angle_min"] = angle_min;
  j["angle_max"] = angle_max;
  j["picks"] = picks;
  for (const auto& r : history)
    j["history"].push_back({{"trial_dim", r.trial_dim},
                            {"test_dim", r.test_dim},
                            {"residual_vectors", r.residual_vectors},
                            {"stabilization_vectors", r.stabilization_vectors},
                            {"angle", r.angle},
                            {"delta", r.delta},
                            {"max_surrogate", r.max_surrogate},
                            {"max_truth_error", std::isnan(r.max_truth_error) ? nlohmann::json() : nlohmann::json(r.max_truth_error)},
                            {"max_exact_error", std::isnan(r.max_exact_error) ? nlohmann::json() : nlohmann::json(r.max_exact_error)},
                            {"seconds", r.seconds}});
  return j;
}

ReducedModel ReducedModel::from_json(const nlohmann::json& j) {
  ReducedModel m;
  m.trial = matrix_from_json(j.at("trial"));
  m.test = matrix_from_json(j.at("test"));
  for (std::size_t k = 0; k < kAffineTerms; ++k) {
    m.B[k] = matrix_from_json(j.at("B").at(k));
    for (std::size_t l = 0; l < kAffineTerms; ++l) m.G[k][l] = matrix_from_json(j.at("G").at(k * kAffineTerms + l));
  }
  for (int e = 0; e < 4; ++e) m.P[e] = matrix_from_json(j.at("P").at(e));
  const auto rhs = j.at("rhs").get<std::vector<double>>();
  m.rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), Eigen::Index(rhs.size()));
  m.angle_min = j.at("angle_min").get<double>();
  m.angle_max = j.at("angle_max").get<double>();
  m.picks = j.at("picks").get<std::vector<double>>();
  auto num = [](const nlohmann::json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
  if (j.contains("history"))
    for (const auto& r : j.at("history"))
      m.history.push_back({r.at("trial_dim").get<std::size_t>(), r.at("test_dim").get<std::size_t>(),
                           r.at("residual_vectors").get<std::size_t>(), r.at("stabilization_vectors").get<std::size_t>(),
                           r.at("angle").get<double>(),
                           r.at("delta").get<double>(), r.at("max_surrogate").get<double>(), num(r.at("max_truth_error")),
                           num(r.at("max_exact_error")), r.at("seconds").get<double>()});
  return m;
}

void ReducedModel::write_history_csv(std::ostream& os) const {
  os << "trial_dim,test_dim,residual_vectors,stabilization_vectors,angle,delta,max_surrogate,max_truth_error,max_exact_error,seconds\n";
  os.precision(10);
  for (const auto& r : history)
    os << r.trial_dim << ',' << r.test_dim << ',' << r.residual_vectors << ',' << r.stabilization_vectors << ','
       << r.angle << ',' << r.delta << ',' << r.max_surrogate << ','
       << r.max_truth_error << ',' << r.max_exact_error << ',' << r.seconds << '\n';
}

ReducedModel empty_model(const TruthModel& truth) {
  ReducedModel m;
  m.trial.resize(Eigen::Index(truth.trial().dim()), 0);
  m.test.resize(Eigen::Index(truth.test().dim()), 0);
  const auto [lo, hi] = std::minmax_element(truth.problem().angles.begin(), truth.problem().angles.end());
  if (lo != truth.problem().angles.end()) {
    m.angle_min = *lo;
    m.angle_max = *hi;
  }
  m.project(truth);
  return m;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd online_solve(const ReducedModel& m, double phi) {
  if (phi < m.angle_min - 1e-12 || phi > m.angle_max + 1e-12)
    spdlog::warn("online solve at angle {} outside the training range [{}, {}]", phi, m.angle_min, m.angle_max);
  if (m.n() == 0) return Eigen::VectorXd();
  if (m.test_dim() < m.n()) throw SingularSystemError("reduced test space smaller than trial space");
  Eigen::LLT<Eigen::MatrixXd> llt(m.reduced_G(phi));
  if (llt.info() != Eigen::Success) throw SingularSystemError("reduced Gram matrix not positive definite");
  const Eigen::MatrixXd M = llt.matrixL().solve(m.reduced_B(phi));
  const Eigen::VectorXd r = llt.matrixL().solve(m.rhs);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-13 * sv(0)) throw SingularSystemError("reduced saddle system is singular");
  return svd.solve(r);
}

double reduced_inf_sup(const ReducedModel& m, double phi, Eigen::VectorXd* worst) {
  const Eigen::Index n = m.trial.cols();
  if (n == 0) return std::numeric_limits<double>::infinity();
  if (m.test.cols() < n) {
    // Some trial direction has no test partner at all.
    if (m.test.cols() == 0) {
      if (worst) *worst = Eigen::VectorXd::Unit(n, n - 1);
      return 0.0;
    }
    Eigen::MatrixXd Bn = m.reduced_B(phi);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Bn, Eigen::ComputeFullV);
    if (worst) *worst = svd.matrixV().col(n - 1);
    return 0.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m.reduced_G(phi));
  const Eigen::MatrixXd M = llt.matrixL().solve(m.reduced_B(phi));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
  if (worst) *worst = svd.matrixV().col(n - 1);
  return svd.singularValues()(n - 1);
}

double truth_residual(const TruthModel& truth, std::size_t i) {
  return truth.gram(i).dual_norm(truth.rhs() - truth.B(truth.angle(i)) * truth.truth_solve(i).u);
}

double surrogate(const TruthModel& truth, const ReducedModel& m, std::size_t i) {
  Eigen::VectorXd e = truth.truth_solve(i).u;
  if (m.n() > 0) e -= m.trial * online_solve(m, truth.angle(i));
  return truth.gram(i).dual_norm(truth.B(truth.angle(i)) * e);
}

int update_inf_sup_delta(const TruthModel& truth, ReducedModel& m, double delta_target, int jobs) {
  if (m.n() == 0) throw std::invalid_argument("update_inf_sup_delta: empty trial space");
  const double target = std::sqrt(1.0 - delta_target * delta_target);
  const int cap = 20 * int(kAffineTerms);
  for (int added = 0;; ++added) {
    const WorstCase wc = worst_inf_sup(truth, m, jobs);
    if (wc.beta >= target) return added;
    if (added == cap)
      throw StabilizationError("reduced inf-sup stabilization did not converge", truth.angle(wc.index), wc.beta);
    const double phi = truth.angle(wc.index);
    Eigen::VectorXd v = truth.gram(wc.index).solve(truth.B(phi) * (m.trial * wc.w));
    if (orthogonalize(m.test, v) < 1e-12)
      throw StabilizationError("supremizer already contained in the reduced test space", phi, wc.beta);
    append_column(m.test, v);
    m.project(truth);
  }
}

// ---------------------------------------------------------------------------

void SurrogateCache::update(const ReducedModel& m, int jobs) {
  const std::size_t n = m.n();
  if (!ready_) entries_.assign(truth_.size(), Entry{});
  parallel_for(truth_.size(), jobs, [&](std::size_t i) {
    Entry& e = entries_[i];
    const GramSolver& gs = truth_.gram(i);
    if (!ready_) {
      const Eigen::VectorXd z = gs.solve(truth_.rhs());
      const double floor = truth_residual(truth_, i);
      e.ff = truth_.rhs().dot(z);
      e.floor = floor * floor;
    }
    if (n <= columns_) return;
    const SparseMatrix Bi = truth_.B(truth_.angle(i));
    const Eigen::MatrixXd W = Bi * m.trial;
    e.fw.conservativeResize(Eigen::Index(n));
    Eigen::MatrixXd ww = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    ww.topLeftCorner(Eigen::Index(columns_), Eigen::Index(columns_)) = e.ww;
    for (std::size_t j = columns_; j < n; ++j) {
      const Eigen::VectorXd z = gs.solve(W.col(Eigen::Index(j)));
      e.fw(Eigen::Index(j)) = truth_.rhs().dot(z);
      const Eigen::VectorXd col = W.leftCols(Eigen::Index(j + 1)).transpose() * z;
      ww.col(Eigen::Index(j)).head(Eigen::Index(j + 1)) = col;
      ww.row(Eigen::Index(j)).head(Eigen::Index(j + 1)) = col.transpose();
    }
    e.ww = std::move(ww);
  });
  ready_ = true;
  columns_ = std::max(columns_, n);
}

double SurrogateCache::value(std::size_t i, const Eigen::VectorXd& c) const {
  const Entry& e = entries_.at(i);
  double r2 = e.ff - e.floor;
  if (c.size() > 0) r2 += -2.0 * c.dot(e.fw.head(c.size())) + c.dot(e.ww.topLeftCorner(c.size(), c.size()) * c);
  return std::sqrt(std::max(r2, 0.0));
}

ReducedModel greedy_build(const TruthModel& truth, const GreedyOptions& opt) {
  if (!(opt.epsilon > 0.0)) throw std::invalid_argument("greedy_build: epsilon must be positive");
  if (!(opt.delta_target > 0.0 && opt.delta_target < 1.0))
    throw std::invalid_argument("greedy_build: delta_target must lie in (0, 1)");

  const auto t0 = std::chrono::steady_clock::now();
  ReducedModel m = empty_model(truth);
  SurrogateCache cache(truth);
  cache.update(m, opt.jobs);
  std::vector<bool> active(truth.size(), true);
  const auto& exact = truth.problem().exact;

  std::vector<Eigen::VectorXd> coeffs(truth.size());
  std::vector<double> surr(truth.size(), 0.0);
  double last_max = std::numeric_limits<double>::infinity();
  std::ptrdiff_t last_pick = -1;
  double last_delta = 0.0;
  bool changed = false;
  std::size_t residual_vectors = 0, stabilization_vectors = 0;

  for (;;) {
    parallel_for(truth.size(), opt.jobs, [&](std::size_t i) {
      coeffs[i] = online_solve(m, truth.angle(i));
      surr[i] = cache.value(i, coeffs[i]);
      // The cached form bottoms out near sqrt(machine eps) times the load.
      if (surr[i] < kCacheFloor) surr[i] = surrogate(truth, m, i);
    });
    std::ptrdiff_t pick = -1;
    double max_surr = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (active[i] && (pick < 0 || surr[i] > max_surr)) {
        pick = std::ptrdiff_t(i);
        max_surr = surr[i];
      }

    if (changed) {
      changed = false;
      GreedyRecord rec;
      rec.trial_dim = m.n();
      rec.test_dim = m.test_dim();
      rec.residual_vectors = residual_vectors;
      rec.stabilization_vectors = stabilization_vectors;
      rec.angle = m.picks.back();
      rec.delta = last_delta;
      rec.max_surrogate = max_surr;
      rec.max_truth_error = std::numeric_limits<double>::quiet_NaN();
      rec.max_exact_error = std::numeric_limits<double>::quiet_NaN();
      if (opt.track_errors) {
        std::vector<double> err(truth.size(), 0.0), ex(truth.size(), 0.0);
        parallel_for(truth.size(), opt.jobs, [&](std::size_t i) {
          const Eigen::VectorXd un = m.trial * coeffs[i];
          err[i] = (truth.truth_solve(i).u - un).norm();
          if (exact) ex[i] = truth.trial().l2_error(un, exact(truth.angle(i)));
        });
        rec.max_truth_error = *std::max_element(err.begin(), err.end());
        if (exact) rec.max_exact_error = *std::max_element(ex.begin(), ex.end());
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      m.history.push_back(rec);
      spdlog::info("greedy n={} test={} surrogate={:.3e} truth error={:.3e} delta={:.3f}", rec.trial_dim,
                   rec.test_dim, rec.max_surrogate, rec.max_truth_error, rec.delta);
    }

    if (pick < 0 || max_surr <= opt.epsilon || m.n() >= opt.n_max) break;

    if (pick == last_pick && max_surr > 0.99 * last_max) {
      spdlog::warn("greedy stagnates at angle {}; removing it from the training set", truth.angle(pick));
      active[pick] = false;
      continue;
    }
    last_pick = pick;
    last_max = max_surr;

    Eigen::VectorXd u = truth.truth_solve(std::size_t(pick)).u;
    if (orthogonalize(m.trial, u) < 1e-10) {
      spdlog::warn("snapshot at angle {} is collinear with the reduced space; removing it", truth.angle(pick));
      active[pick] = false;
      continue;
    }
    append_column(m.trial, u);
    m.picks.push_back(truth.angle(pick));
    // The lifted truth residual makes the snapshot the exact reduced solution at its angle.
    Eigen::VectorXd y = truth.truth_solve(std::size_t(pick)).y;
    if (orthogonalize(m.test, y) > 1e-12) {
      append_column(m.test, y);
      ++residual_vectors;
    }
    m.project(truth);
    stabilization_vectors += std::size_t(update_inf_sup_delta(truth, m, opt.delta_target, opt.jobs));
    const double beta = worst_inf_sup(truth, m, opt.jobs).beta;
    last_delta = std::sqrt(std::max(0.0, 1.0 - beta * beta));
    cache.update(m, opt.jobs);
    changed = true;
  }
  return m;
}

}  // namespace transport

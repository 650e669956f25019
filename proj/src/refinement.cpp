#include "wbmr/refinement.hpp"

#include <cmath>
#include <string>

#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {

void RefinementConfig::validate() const {
  if (!(contact_threshold > 0.0 && contact_threshold < 1.0)) {
    throw ConfigError("refinement: contact threshold must lie strictly inside (0,1)");
  }
  if (lambda_data < 0.0 || lambda_contact < 0.0 || lambda_smooth < 0.0) {
    throw ConfigError("refinement: weights must be non-negative");
  }
  if (lambda_data == 0.0 && (lambda_contact > 0.0 || lambda_smooth > 0.0)) {
    throw ConfigError(
        "refinement: the fidelity weight must be positive when another term is active");
  }
  if (max_iterations < 1) throw ConfigError("refinement: max iterations must be at least 1");
  if (tolerance < 0.0) throw ConfigError("refinement: tolerance must be non-negative");
}

namespace {

// One quadratic problem over the M = T-1 world-frame step vectors
// u_t = R_t * v_t (the per-frame root displacement). In that variable the
// fidelity term keeps its form because the rotations are orthogonal, the
// contact term is `u_t + (fixed joint offset change)`, and second
// differences of the root positions are first differences of u.
struct StepProblem {
  int M = 0;
  MatX3 u0;                          // incoming steps, M x 3
  std::vector<double> diag;          // per-row data+contact weight
  MatX3 rhs;                         // M x 3
  double lambda_smooth = 0.0;
  // Gated contact displacements, flattened: for row t, deltas[k] with
  // k in [delta_start[t], delta_start[t+1]).
  std::vector<Vec3> deltas;
  std::vector<int> delta_start;
  double lambda_contact = 0.0;
  double lambda_data = 0.0;

  MatX3 apply(const MatX3& p) const {
    MatX3 q(M, 3);
    for (int t = 0; t < M; ++t) {
      q.row(t) = diag[t] * p.row(t);
      if (t > 0) q.row(t) += lambda_smooth * (p.row(t) - p.row(t - 1));
      if (t + 1 < M) q.row(t) += lambda_smooth * (p.row(t) - p.row(t + 1));
    }
    return q;
  }

  double objective(const MatX3& u) const {
    double e = lambda_data * (u - u0).squaredNorm();
    for (int t = 0; t < M; ++t) {
      for (int k = delta_start[t]; k < delta_start[t + 1]; ++k) {
        e += lambda_contact * (u.row(t).transpose() + deltas[k]).squaredNorm();
      }
    }
    for (int t = 1; t < M; ++t) {
      e += lambda_smooth * (u.row(t) - u.row(t - 1)).squaredNorm();
    }
    return e;
  }
};

bool transition_gated(const MotionSequence& states, int contact, int t, double threshold) {
  const double a = states.frames[t].contacts(contact);
  const double b = states.frames[t + 1].contacts(contact);
  return std::min(a, b) >= threshold;
}

}  // namespace

RefinementResult refine_trajectory(const MotionSequence& states, const SkeletonModel& skel,
                                   const RefinementConfig& config) {
  config.validate();
  const int T = states.length();
  if (T == 0) throw ConfigError("refinement: empty sequence");

  RefinementResult res;
  res.refined = states;

  // Only the fidelity term is active (or nothing is): the input already
  // minimizes the objective, so hand it back without touching a bit.
  const bool inert = (config.lambda_contact == 0.0 && config.lambda_smooth == 0.0) || T < 2;
  if (inert) {
    res.trajectory = canonical_roots(res.refined);
    res.objective_history = {0.0};
    return res;
  }

  const std::vector<RootTransform> roots = canonical_roots(states);
  const std::vector<MatX3> joints = joint_trajectory(states, skel);

  StepProblem prob;
  prob.M = T - 1;
  prob.lambda_data = config.lambda_data;
  prob.lambda_contact = config.lambda_contact;
  prob.lambda_smooth = config.lambda_smooth;
  prob.u0.resize(prob.M, 3);
  prob.rhs.resize(prob.M, 3);
  prob.diag.resize(prob.M);
  prob.delta_start.assign(prob.M + 1, 0);

  for (int t = 0; t < prob.M; ++t) {
    prob.u0.row(t) = (roots[t].R * states.frames[t].root_velocity).transpose();
    Vec3 rhs = config.lambda_data * prob.u0.row(t).transpose();
    int gated = 0;
    for (int c = 0; c < kNumContacts; ++c) {
      if (!transition_gated(states, c, t, config.contact_threshold)) continue;
      const int j = kContactJoints[c];
      // Change of the joint's offset from the root across the pair; the
      // joint's world step is u_t plus this fixed displacement.
      const Vec3 delta = (joints[t + 1].row(j) - roots[t + 1].t.transpose()).transpose() -
                         (joints[t].row(j) - roots[t].t.transpose()).transpose();
      prob.deltas.push_back(delta);
      rhs -= config.lambda_contact * delta;
      ++gated;
    }
    prob.delta_start[t + 1] = static_cast<int>(prob.deltas.size());
    prob.diag[t] = config.lambda_data + config.lambda_contact * gated;
    prob.rhs.row(t) = rhs.transpose();
  }

  // Conjugate gradient from the incoming steps. Each update can only lower
  // the quadratic; that is asserted on the explicit objective so a
  // conditioning problem surfaces immediately instead of corrupting motion.
  MatX3 u = prob.u0;
  double energy = prob.objective(u);
  res.objective_history.push_back(energy);

  MatX3 r = prob.rhs - prob.apply(u);
  MatX3 p = r;
  double rs = r.squaredNorm();
  bool updated = false;
  for (int it = 0; it < config.max_iterations && rs > 1e-30; ++it) {
    const MatX3 ap = prob.apply(p);
    const double denom = (p.array() * ap.array()).sum();
    if (denom <= 0.0) break;  // numerically exhausted search direction
    const double alpha = rs / denom;
    u += alpha * p;
    r -= alpha * ap;
    updated = true;
    ++res.iterations;

    const double next = prob.objective(u);
    if (next > energy + 1e-9 * (1.0 + std::abs(energy))) {
      throw NumericalError("refinement: objective increased during the solve");
    }
    const double decrease = energy - next;
    energy = next;
    res.objective_history.push_back(energy);
    if (decrease < config.tolerance) break;

    const double rs_next = r.squaredNorm();
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }

  if (updated) {
    for (int t = 0; t < prob.M; ++t) {
      res.refined.frames[t].root_velocity = roots[t].R.transpose() * u.row(t).transpose();
    }
  }
  res.trajectory = canonical_roots(res.refined);
  return res;
}

FootSliding foot_sliding(const MotionSequence& states, const SkeletonModel& skel,
                         const MatX& contact_labels, double threshold) {
  const int T = states.length();
  if (contact_labels.rows() != kNumContacts || contact_labels.cols() != T) {
    throw ConfigError("foot sliding: labels must be contacts x frames");
  }
  const std::vector<MatX3> joints = joint_trajectory(states, skel);

  FootSliding out;
  double sum = 0.0;
  for (int t = 0; t + 1 < T; ++t) {
    for (int c = 0; c < kNumContacts; ++c) {
      if (std::min(contact_labels(c, t), contact_labels(c, t + 1)) < threshold) continue;
      const int j = kContactJoints[c];
      const Eigen::RowVector3d step = joints[t + 1].row(j) - joints[t].row(j);
      sum += std::hypot(step(0), step(2));  // horizontal glide only
      ++out.transitions;
    }
  }
  if (out.transitions > 0) {
    out.defined = true;
    out.mm_per_frame = 1000.0 * sum / out.transitions;
  }
  return out;
}

FootSliding foot_sliding(const MotionSequence& states, const SkeletonModel& skel,
                         double threshold) {
  MatX labels(kNumContacts, states.length());
  for (int t = 0; t < states.length(); ++t) labels.col(t) = states.frames[t].contacts;
  return foot_sliding(states, skel, labels, threshold);
}

}  // namespace wbmr

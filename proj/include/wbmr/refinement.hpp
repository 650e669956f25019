#pragma once

#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/kinematics.hpp"
#include "wbmr/representation.hpp"

namespace wbmr {

// ── contact-aware trajectory refinement ──────────────────────────────────
// Post-hoc cleanup of the root translation: re-solves the per-frame root
// velocities so that joints labeled in contact stop gliding and the root
// path loses high-frequency wobble, while staying close to the incoming
// estimate. Pose, shape, orientations, camera channels and contacts are
// never modified.

struct RefinementConfig {
  double contact_threshold = 0.5;  // probability gate for a planted transition
  double lambda_data = 1.0;        // fidelity to the incoming velocities
  double lambda_contact = 100.0;   // planted joints should not translate
  double lambda_smooth = 1.0;      // damps second differences of the root path
  int max_iterations = 200;
  double tolerance = 1e-12;        // stop once the per-step objective decrease falls below

  // Weights must be non-negative and the threshold strictly inside (0,1).
  // The fidelity weight must stay positive whenever another term is active,
  // otherwise the problem would not pin down a unique solution.
  void validate() const;
};

struct RefinementResult {
  MotionSequence refined;                 // input with root velocities re-solved
  std::vector<RootTransform> trajectory;  // canonical world roots of `refined`
  std::vector<double> objective_history;  // objective at start and after each step
  int iterations = 0;
};

// Minimizes a least-squares objective over the root velocities only: a
// fidelity term to the input, a penalty on the world velocity of every
// contact joint across frame pairs whose contact probability clears the
// threshold on both ends, and a penalty on second differences of the root
// positions. The quadratic is solved iteratively; the objective is checked
// to be non-increasing after every step and the solve aborts with
// NumericalError if that ever fails. When neither the contact nor the
// smoothness term is active the input is returned bit-identically. The last
// frame's velocity never influences positions inside the clip, so it is
// always left untouched.
RefinementResult refine_trajectory(const MotionSequence& states, const SkeletonModel& skel,
                                   const RefinementConfig& config);

struct FootSliding {
  bool defined = false;       // false when no transition passes the contact gate
  double mm_per_frame = 0.0;  // mean horizontal glide of planted joints
  int transitions = 0;        // gated (joint, frame pair) count
};

// Mean horizontal displacement (millimeters per frame pair) of the contact
// joints, measured in the canonical world frame over frame pairs where the
// supplied labels (one row per contact joint, one column per frame) keep
// the joint planted on both ends.
FootSliding foot_sliding(const MotionSequence& states, const SkeletonModel& skel,
                         const MatX& contact_labels, double threshold = 0.5);

// Same, gated by the sequence's own contact channel.
FootSliding foot_sliding(const MotionSequence& states, const SkeletonModel& skel,
                         double threshold = 0.5);

}  // namespace wbmr

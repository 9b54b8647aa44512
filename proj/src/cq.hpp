#pragma once

#include <optional>
#include <string>
#include <vector>

#include "problem.hpp"

namespace daeopt {

enum class CqStatus { kCertified, kRefuted, kCandidateRefuted, kInconclusive };

std::string to_string(CqStatus s);

struct CqOptions {
  uint64_t seed = 971203;
  double tol = 1e-7;          // cone triviality / projection threshold
  double feas_tol = 1e-8;     // feasibility of the base point
  double witness_tol = 1e-8;  // witness re-validation residual
  int samples = 200;          // sampled checkers (RCPLD, CRCQ, quasinormality)
  double delta = 1e-3;        // sampling radius
  int dim_cap = 6;            // FOSCMS/SOSCMS critical-cone ambient cap
  int subset_cap = 4096;      // active-set subset cap
  int piece_cap = 8;          // union piece combinations cap
  int tube_samples = 0;       // extra feasible samples per node in tube mode
  double tube_eps = 0.1;      // state radius for tube sampling
};

struct CqVerdict {
  std::string name;
  CqStatus status = CqStatus::kInconclusive;
  std::optional<Vector> witness_multiplier;  // lambda
  std::optional<Vector> witness_direction;   // d (FOSCMS/SOSCMS)
  std::optional<Vector> witness_point;       // sampled point (RCPLD/CRCQ/quasinormality)
  std::optional<Vector> witness_alpha;       // WBCQ
  std::optional<double> modulus;             // CCQ
  std::vector<std::string> notes;

  bool certified() const { return status == CqStatus::kCertified; }
};

struct CqLadderReport {
  std::vector<CqVerdict> verdicts;
  bool calmness_sufficient = false;
  std::string via;  // which condition established it
  std::vector<std::string> notes;

  const CqVerdict* find(const std::string& name) const;
};

// Individual checkers (Definition-2.5 battery and its verifiable sufficient
// conditions). All take a feasible point in the system's full layout.
CqVerdict check_nnamcq(const ConstraintSystem& sys, const Vector& point,
                       const CqOptions& opts = {});
CqVerdict check_mfc(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts = {});
CqVerdict check_wbcq(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts = {});
CqVerdict check_ccq(const ConstraintSystem& sys, const Vector& point, const CqOptions& opts = {});
CqVerdict check_linear_cq(const ConstraintSystem& sys);
CqVerdict check_foscms(const ConstraintSystem& sys, const Vector& point,
                       const CqOptions& opts = {});
CqVerdict check_soscms(const ConstraintSystem& sys, const Vector& point,
                       const CqOptions& opts = {});
CqVerdict check_rcpld(const ConstraintSystem& sys, const Vector& point, double delta, int samples,
                      const CqOptions& opts = {});
CqVerdict check_crcq(const ConstraintSystem& sys, const Vector& point, double delta, int samples,
                     const CqOptions& opts = {});
/// Refutation-only search for a quasinormality violation; never certifies.
CqVerdict falsify_quasinormality(const ConstraintSystem& sys, const Vector& point, int samples,
                                 const CqOptions& opts = {});

/// Runs the whole battery and derives the calmness-sufficient flag.
CqLadderReport check_calmness_sufficient(const ConstraintSystem& sys, const Vector& point,
                                         const CqOptions& opts = {});

struct IndexOneReport {
  int algebraic_rank = 0;
  int n_y = 0;
  bool index_one = false;
  Vector singular_values;
};

/// Rank of the algebraic part's Jacobian in the y block (index-one test).
IndexOneReport check_index_one(const ControlProblem& p, const Vector& node_point);

enum class TrajectoryCqMode { kAlong, kTube };

struct TrajectoryCqResult {
  std::vector<CqLadderReport> per_node;
  bool sufficient_everywhere = false;
  std::vector<std::string> notes;
};

/// Ladder at every mesh node of a trajectory; tube mode additionally samples
/// feasible neighbors within the state/control radius at each node.
TrajectoryCqResult check_along_trajectory(const ControlProblem& p,
                                          const std::vector<Vector>& node_points,
                                          const std::vector<double>& node_times,
                                          TrajectoryCqMode mode, const CqOptions& opts = {});

}  // namespace daeopt

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace lsgate::srb {

// Symmetric-subspace benchmarking on span{|dd>, (|du>+|ud>)/sqrt(2), |uu>}.
// The qutrit Clifford group (216 phase classes) is generated by the ternary
// Fourier gate and the diag(1,1,w) phase gate; the native gate set is global
// equatorial rotations plus the entangling gate diag(1,i,1).

// One native gate: an equatorial rotation exp(-i angle (cos(axis) Jx + sin(axis) Jy))
// acting in the spin-1 representation, or the entangler when entangler is set.
struct NativeGate {
  bool entangler = false;
  double axis = 0.0;   // azimuth of the rotation axis in the xy plane
  double angle = 0.0;  // rotation angle in (0, 2 pi)
};

// Native realization of one Clifford element, gates applied left to right.
struct CompiledClifford {
  std::vector<NativeGate> gates;
  int n_ls = 0;  // entangling gate count
  int n_1q = 0;  // equatorial pulse count
};

struct CatalogStats {
  int max_n_ls = 0;
  double mean_n_ls = 0;
  double mean_n_1q = 0;
  std::array<int, 5> ls_histogram{};  // elements using 0..4 entanglers
};

class CliffordGroup {
 public:
  static const CliffordGroup& instance();

  int size() const { return static_cast<int>(elems_.size()); }
  const Eigen::Matrix3cd& element(int i) const { return elems_[i]; }
  // phase-insensitive membership lookup, -1 when absent
  int find(const Eigen::Matrix3cd& u) const;
  int product(int a, int b) const { return table_[a * size() + b]; }
  int inverse(int a) const { return inv_[a]; }

 private:
  CliffordGroup();
  std::vector<Eigen::Matrix3cd> elems_;
  std::vector<int> table_;
  std::vector<int> inv_;
};

class CompiledCatalog {
 public:
  static const CompiledCatalog& instance();

  const CompiledClifford& sequence(int i) const { return seq_[i]; }
  const CatalogStats& stats() const { return stats_; }

 private:
  CompiledCatalog();
  std::vector<CompiledClifford> seq_;
  CatalogStats stats_;
};

Eigen::Matrix3cd ls_gate();
Eigen::Matrix3cd equatorial_rotation(double axis, double angle);
Eigen::Matrix3cd recompose(const CompiledClifford& c);
// min over global phase of ||a - e^{ig} b||_F
double phase_distance(const Eigen::Matrix3cd& a, const Eigen::Matrix3cd& b);
const CompiledClifford& compile_clifford(int index);

struct RandomSequence {
  std::vector<int> cliffords;  // group indices, applied in order
  int inverter = 0;            // group index undoing the product
};
RandomSequence generate_sequence(int length, std::uint64_t seed);

// Rate-based noise: one depolarizing kick of strength 3/2 eps per Clifford,
// per entangler, or per equatorial pulse; the inverting element stays ideal so
// exact survivals follow 1/3 + 2/3 prod(1 - 3/2 eps) over the random part.
struct DepolarizingNoise {
  double eps_clifford = 0;
  double eps_ls = 0;
  double eps_1q = 0;
};

// Gate-level noise: the entangler acts as the supplied (possibly contracting)
// process on the symmetric subspace; every compiled gate including the
// inverter is noisy, so leakage pulls the asymptote below 1/3.
struct ProcessNoise {
  Eigen::Matrix3cd ls_process = Eigen::Matrix3cd::Identity();
  double eps_1q = 0;
};

using NoiseModel = std::variant<DepolarizingNoise, ProcessNoise>;

struct SequenceRecord {
  int length = 0;
  std::uint64_t seed = 0;
  int shots = 0;  // 0 records the exact probability
  double survival = 0;
};

struct SRBDataset {
  std::vector<int> lengths;
  std::vector<SequenceRecord> records;
  std::string noise_label;
};

SRBDataset run_srb(const NoiseModel& noise, const std::vector<int>& lengths,
                   int n_seq, int shots, std::uint64_t seed, int threads = 1);

struct FitOptions {
  bool free_asymptote = false;  // comparison mode; default pins 1/3
  double eps_1q = 9e-5;         // single-qubit RB number used in extraction
};

struct SRBFit {
  double p = 0;
  double amplitude = 0;
  double asymptote = 1.0 / 3.0;
  double avg_fidelity_clifford = 0;
  double eps_clifford = 0;
  double avg_fidelity_ls = 0;
  double eps_ls = 0;
  double sigma_p = 0;
  double sigma_clifford = 0;
  double sigma_ls = 0;
  double mean_n_ls = 0;  // catalog counts backing the extraction
  double mean_n_1q = 0;
};

SRBFit fit_srb(const SRBDataset& data, const FitOptions& opt = {});

// Entangler-free replay of the compiled sequences under per-pulse
// depolarizing; the closing rotation is a single microwave block.
std::vector<double> gap_survivals(double eps_1q, const std::vector<int>& lengths);
double gap_calibrate(double survival, int length);

void write_csv(std::ostream& os, const SRBDataset& data);
SRBDataset read_csv(std::istream& is);

}  // namespace lsgate::srb

#include "mtdl/dp_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtdl {

namespace {

constexpr double kLogFloor = 1e-12;

// Losses this close are treated as equal so that the smaller stage wins
// regardless of summation order.
double tie_tolerance(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

DecodeResult finish(StageSequence seq, const ProbabilityMatrix& m, FrameLoss kind) {
  DecodeResult r;
  r.frame_losses.resize(seq.size());
  for (std::size_t n = 0; n < seq.size(); ++n) {
    r.frame_losses[n] = per_frame_loss(seq[n], m.column(n), kind);
    r.total_loss += r.frame_losses[n];
  }
  r.sequence = std::move(seq);
  return r;
}

}  // namespace

std::string_view loss_name(FrameLoss k) { return k == FrameLoss::LL ? "ll" : "em"; }

std::optional<FrameLoss> parse_loss(std::string_view name) {
  if (name == "ll") return FrameLoss::LL;
  if (name == "em") return FrameLoss::EM;
  return std::nullopt;
}

double per_frame_loss(Stage candidate, std::span<const double> p, FrameLoss kind) {
  if (candidate < 1 || candidate > static_cast<int>(p.size())) {
    throw Error(ErrorCode::InvalidArgument, "candidate stage out of range");
  }
  if (kind == FrameLoss::LL) return -std::log(std::max(p[candidate - 1], kLogFloor));
  double e = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    e += p[l] * std::abs(candidate - static_cast<int>(l + 1));
  }
  return e;
}

double total_loss(std::span<const Stage> s, const ProbabilityMatrix& m, FrameLoss kind) {
  if (s.empty() || s.size() != m.num_frames()) {
    throw Error(ErrorCode::LengthMismatch, "sequence length must equal the number of columns (and be > 0)");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) total += per_frame_loss(s[n], m.column(n), kind);
  return total;
}

DecodeResult decode(const ProbabilityMatrix& m, FrameLoss kind) {
  require_valid(m);
  const std::size_t N = m.num_frames();
  const int L = m.num_stages();

  // best[n][l]: minimum loss of frames n..N-1 given frame n takes stage l+1.
  // This is the forward recursion E(y, p_n) = e(y, p_n) + min_{l<=y} E(l, p_{n-1})
  // run on the time-reversed problem, which lets the reconstruction walk
  // forward and pick the smallest stage at each frame.
  std::vector<double> best(N * L);
  std::vector<double> suffix_min(L + 1);
  for (std::size_t n = N; n-- > 0;) {
    if (n + 1 < N) {
      suffix_min[L] = std::numeric_limits<double>::infinity();
      for (int l = L - 1; l >= 0; --l) suffix_min[l] = std::min(best[(n + 1) * L + l], suffix_min[l + 1]);
    }
    for (int l = 0; l < L; ++l) {
      const double rest = n + 1 < N ? suffix_min[l] : 0.0;
      best[n * L + l] = per_frame_loss(l + 1, m.column(n), kind) + rest;
    }
  }

  StageSequence seq(N);
  int lo = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = &best[n * L];
    const double target = *std::min_element(row + lo, row + L);
    int pick = lo;
    while (row[pick] > target + tie_tolerance(target)) ++pick;
    seq[n] = pick + 1;
    lo = pick;
  }
  return finish(std::move(seq), m, kind);
}

std::uint64_t count_monotone_sequences(std::size_t n, int num_stages) {
  // C(n + k, k) with k = L - 1, computed incrementally; each partial product
  // is itself a binomial coefficient, so the division is exact.
  const std::uint64_t k = static_cast<std::uint64_t>(num_stages - 1);
  unsigned __int128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n + i) / i;
    if (c > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(c);
}

void for_each_monotone_sequence(std::size_t n, int num_stages,
                                const std::function<void(std::span<const Stage>)>& visit) {
  if (n == 0) return;
  StageSequence s(n, 1);
  while (true) {
    visit(s);
    std::size_t i = n;
    while (i > 0 && s[i - 1] == num_stages) --i;
    if (i == 0) return;
    const Stage v = s[i - 1] + 1;
    std::fill(s.begin() + static_cast<std::ptrdiff_t>(i - 1), s.end(), v);
  }
}

DecodeResult brute_force_decode(const ProbabilityMatrix& m, FrameLoss kind, std::uint64_t limit) {
  require_valid(m);
  const auto count = count_monotone_sequences(m.num_frames(), m.num_stages());
  if (count > limit) {
    throw Error(ErrorCode::TooLarge, std::to_string(count) + " monotone sequences exceed the limit of " +
                                         std::to_string(limit));
  }
  StageSequence best_seq;
  double best = std::numeric_limits<double>::infinity();
  for_each_monotone_sequence(m.num_frames(), m.num_stages(), [&](std::span<const Stage> s) {
    const double e = total_loss(s, m, kind);
    if (best_seq.empty() || e < best - tie_tolerance(best)) {
      best = e;
      best_seq.assign(s.begin(), s.end());
    }
  });
  return finish(std::move(best_seq), m, kind);
}

}  // namespace mtdl

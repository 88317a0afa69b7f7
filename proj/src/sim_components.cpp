#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mecctl/sim.hpp"

namespace mecctl::sim {

namespace {
constexpr double kDoneEps = 1e-6;  // core-ms left when a job counts as finished
}

std::size_t route_request(std::span<const double> probs, Rng& rng) {
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0) throw std::invalid_argument("negative routing probability");
    sum += p;
  }
  if (probs.empty() || std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("routing row does not sum to 1");
  }
  const double u = rng.uniform() * sum;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

double PsServer::rate() const {
  if (active_.empty()) return 0.0;
  return std::min(allocation_mc_ / static_cast<double>(active_.size()), cap_mc_);
}

void PsServer::advance(double now) {
  const double dt = now - clock_;
  if (dt > 0) {
    const double r = rate();
    for (auto& j : active_) j.remaining -= r * dt;
  }
  clock_ = std::max(clock_, now);
}

void PsServer::set_allocation(double now, double allocation_mc) {
  advance(now);
  allocation_mc_ = allocation_mc;
}

bool PsServer::add(double now, std::uint64_t id, double demand_core_ms) {
  advance(now);
  if (limit_ == 0 || active_.size() < limit_) {
    active_.push_back({id, demand_core_ms, now});
    return true;
  }
  queue_.emplace_back(id, demand_core_ms);
  return false;
}

std::vector<std::pair<std::uint64_t, double>> PsServer::take_completed(double now) {
  advance(now);
  std::vector<std::pair<std::uint64_t, double>> done;
  std::vector<Job> keep;
  for (const auto& j : active_) {
    if (j.remaining <= kDoneEps) {
      done.emplace_back(j.id, j.started);
    } else {
      keep.push_back(j);
    }
  }
  active_ = std::move(keep);
  while (!queue_.empty() && (limit_ == 0 || active_.size() < limit_)) {
    active_.push_back({queue_.front().first, queue_.front().second, now});
    queue_.pop_front();
  }
  return done;
}

std::optional<double> PsServer::next_completion() const {
  const double r = rate();
  if (active_.empty() || r <= 0) return std::nullopt;
  double least = active_.front().remaining;
  for (const auto& j : active_) least = std::min(least, j.remaining);
  return clock_ + std::max(0.0, least) / r;
}

std::vector<std::uint64_t> PsServer::drop_all() {
  std::vector<std::uint64_t> ids;
  for (const auto& j : active_) ids.push_back(j.id);
  for (const auto& q : queue_) ids.push_back(q.first);
  active_.clear();
  queue_.clear();
  return ids;
}

void GpuServer::fill(double now) {
  while (!queue_.empty() && active_.size() < concurrency_) {
    active_.push_back({queue_.front(), now});
    queue_.pop_front();
  }
}

void GpuServer::set_concurrency(double now, std::size_t concurrency) {
  concurrency_ = concurrency;
  fill(now);
}

void GpuServer::add(double now, std::uint64_t id) {
  queue_.push_back(id);
  fill(now);
}

std::vector<std::pair<std::uint64_t, double>> GpuServer::take_completed(double now) {
  std::vector<std::pair<std::uint64_t, double>> done;
  std::vector<Job> keep;
  for (const auto& j : active_) {
    if (j.started + service_s_ <= now + 1e-12) {
      done.emplace_back(j.id, j.started);
    } else {
      keep.push_back(j);
    }
  }
  active_ = std::move(keep);
  fill(now);
  return done;
}

std::optional<double> GpuServer::next_completion() const {
  if (active_.empty()) return std::nullopt;
  double first = active_.front().started;
  for (const auto& j : active_) first = std::min(first, j.started);
  return first + service_s_;
}

std::vector<std::uint64_t> GpuServer::drop_all() {
  std::vector<std::uint64_t> ids;
  for (const auto& j : active_) ids.push_back(j.id);
  for (auto id : queue_) ids.push_back(id);
  active_.clear();
  queue_.clear();
  return ids;
}

std::size_t ramp_users(const WorkloadProgram& p, double t) {
  if (t < p.start_s) return 0;
  const double users = p.start_users + std::floor(p.add_per_s * (t - p.start_s));
  return static_cast<std::size_t>(std::min(users, p.max_users));
}

std::string migration_area(const WorkloadProgram& p, std::size_t user, double t) {
  std::string area = p.from_area;
  const double n = static_cast<double>(std::max<std::size_t>(p.users, 1));
  for (const auto& m : p.moves) {
    if (t >= m.start_s + m.window_s * static_cast<double>(user + 1) / n) area = m.to_area;
  }
  return area;
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::completed:
      return "completed";
    case Outcome::timeout:
      return "timeout";
    case Outcome::in_flight:
      return "in_flight";
  }
  return "?";
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

WindowStats collect_window(std::span<const RequestRecord> records, double window_s) {
  WindowStats w;
  double qe = 0.0;
  std::vector<double> rts;
  for (const auto& r : records) {
    if (r.violated) ++w.violations;
    if (r.outcome != Outcome::completed) continue;
    ++w.completions;
    qe += r.q_ms + r.e_ms;
    w.rt_sum_ms += r.rt_ms;
    w.network_ms += r.d_ms;
    rts.push_back(r.rt_ms);
  }
  if (window_s > 0) w.lambda_rps = static_cast<double>(w.completions) / window_s;
  if (w.completions > 0) {
    const double n = static_cast<double>(w.completions);
    w.mean_qe_ms = qe / n;
    w.mean_rt_ms = w.rt_sum_ms / n;
    w.p99_rt_ms = percentile(std::move(rts), 0.99);
  }
  return w;
}

}  // namespace mecctl::sim

#include "exlab/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "exlab/shapiro.hpp"

namespace exlab::detector {

void DetectorConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (window_min < 3) throw std::invalid_argument("window_min must be >= 3");
  if (!(outlier_sigmas > 0.0)) throw std::invalid_argument("outlier_sigmas must be > 0");
}

double distance(const Vec& a, const Vec& b, Metric metric) {
  if (a.size() != b.size()) throw ShapeError("distance: dimension mismatch");
  double acc = 0.0;
  if (metric == Metric::l2) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

DecideResult decide(const Vec& distances, const DetectorConfig& cfg) {
  cfg.validate();
  DecideResult r;
  const double mu = mean(distances);
  const double sd = pop_std(distances);
  Vec trimmed;
  trimmed.reserve(distances.size());
  for (double z : distances)
    if (std::abs(z - mu) <= cfg.outlier_sigmas * sd) trimmed.push_back(z);
  r.trimmed_count = static_cast<int>(distances.size() - trimmed.size());
  try {
    r.w = shapiro::shapiro_w(trimmed);
  } catch (const shapiro::TooFewSamples&) {
    r.degenerate = true;
  } catch (const shapiro::DegenerateSample&) {
    r.degenerate = true;
  }
  if (r.degenerate) {
    r.w = 0.0;
    r.attack = true;
    return r;
  }
  r.attack = r.w < cfg.delta;
  return r;
}

std::vector<std::optional<DecideResult>> decide_stream(const Vec& distances,
                                                       const DetectorConfig& cfg) {
  std::vector<std::optional<DecideResult>> out;
  out.reserve(distances.size());
  Vec d;
  d.reserve(distances.size());
  for (double v : distances) {
    d.push_back(v);
    if (static_cast<int>(d.size()) > cfg.window_min)
      out.push_back(decide(d, cfg));
    else
      out.push_back(std::nullopt);
  }
  return out;
}

ClientState::ClientState(DetectorConfig cfg, bool alarm_feedback)
    : cfg_(cfg), alarm_feedback_(alarm_feedback) {
  cfg_.validate();
}

Verdict ClientState::observe(const Vec& x, int predicted_class) {
  if (alarm_feedback_ && cfg_.response_mode == ResponseMode::block && first_alarm_)
    throw DeniedQuery("client is blocked after an extraction alarm");
  if (dim_ && static_cast<int>(x.size()) != *dim_)
    throw ShapeError("observe: sample dimension changed");
  dim_ = static_cast<int>(x.size());

  ++queries_;
  Verdict v;
  auto it = classes_.find(predicted_class);
  if (it == classes_.end()) {
    // First sample of this class: initialize the growing set, no D entry.
    ClassState cs;
    cs.growing.push_back(x);
    cs.growing_dmins.push_back(0.0);
    cs.threshold = 0.0;
    classes_.emplace(predicted_class, std::move(cs));
  } else {
    ClassState& cs = it->second;
    double dmin = std::numeric_limits<double>::infinity();
    for (const Vec& y : cs.growing)
      dmin = std::min(dmin, distance(x, y, cfg_.metric));
    v.d_min = dmin;
    dmins_.push_back(dmin);
    const bool frozen = alarm_feedback_ && first_alarm_.has_value();  // growth stops after alarm
    if (!frozen && dmin > cs.threshold) {
      cs.growing.push_back(x);
      cs.growing_dmins.push_back(dmin);
      cs.threshold = std::max(cs.threshold, mean(cs.growing_dmins) - pop_std(cs.growing_dmins));
    }
  }

  if (static_cast<int>(dmins_.size()) > cfg_.window_min) {
    const DecideResult r = decide(dmins_, cfg_);
    alarm_ = r.attack;
    v.w = r.w;
    v.trimmed_count = r.trimmed_count;
    v.degenerate = r.degenerate;
    v.status = r.attack ? Status::attack : Status::benign;
    if (r.attack && !first_alarm_) first_alarm_ = queries_;
  } else {
    v.status = Status::warming_up;
  }
  return v;
}

std::size_t ClientState::growing_set_bytes() const {
  std::size_t bytes = 0;
  for (const auto& [cls, cs] : classes_)
    for (const Vec& s : cs.growing) bytes += s.size() * sizeof(double);
  return bytes;
}

Response respond(bool alarmed, const Vec& prediction, ResponseMode mode) {
  double sum = 0.0;
  for (double p : prediction) {
    if (p < 0.0) throw std::invalid_argument("respond: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("respond: prediction does not sum to 1");

  Response r;
  r.alarmed = alarmed;
  r.probs = prediction;
  auto argmax_from = [&](const Vec& p) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
      if (p[i] > p[best]) best = i;
    return best;
  };
  r.label = argmax_from(prediction);
  if (!alarmed || mode == ResponseMode::flag) return r;
  if (mode == ResponseMode::block) {
    r.denied = true;
    r.probs.clear();
    return r;
  }
  // deceive: swap the top two probabilities so the runner-up is reported.
  if (prediction.size() >= 2) {
    const int top = r.label;
    int second = top == 0 ? 1 : 0;
    for (int i = 0; i < static_cast<int>(prediction.size()); ++i) {
      if (i == top) continue;
      if (prediction[i] > prediction[second]) second = i;
    }
    std::swap(r.probs[top], r.probs[second]);
    r.label = second;
  }
  return r;
}

namespace {

std::string hex_double(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double double_from_hex(const std::string& s) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(s, nullptr, 16)));
}

const char* metric_tag(Metric m) { return m == Metric::l2 ? "l2" : "l1"; }
const char* mode_tag(ResponseMode m) {
  switch (m) {
    case ResponseMode::flag: return "flag";
    case ResponseMode::block: return "block";
    case ResponseMode::deceive: return "deceive";
  }
  return "?";
}

}  // namespace

void ClientState::save(std::ostream& out) const {
  out << "exlab-client 1\n";
  out << "config " << hex_double(cfg_.delta) << " " << cfg_.window_min << " "
      << hex_double(cfg_.outlier_sigmas) << " " << metric_tag(cfg_.metric) << " "
      << mode_tag(cfg_.response_mode) << "\n";
  out << "queries " << queries_ << "\n";
  out << "alarm " << (alarm_ ? 1 : 0) << "\n";
  out << "first_alarm " << (first_alarm_ ? static_cast<long long>(*first_alarm_) : -1) << "\n";
  out << "dim " << (dim_ ? *dim_ : -1) << "\n";
  out << "dmins " << dmins_.size();
  for (double d : dmins_) out << " " << hex_double(d);
  out << "\nclasses " << classes_.size() << "\n";
  for (const auto& [cls, cs] : classes_) {
    out << "class " << cls << " " << cs.growing.size() << " " << hex_double(cs.threshold) << "\n";
    out << "gdmins";
    for (double d : cs.growing_dmins) out << " " << hex_double(d);
    out << "\n";
    for (const Vec& s : cs.growing) {
      out << "sample " << s.size();
      for (double v : s) out << " " << hex_double(v);
      out << "\n";
    }
  }
}

ClientState ClientState::load(std::istream& in) {
  std::string magic, key, tag1, tag2, hex;
  int version = 0;
  in >> magic >> version;
  if (magic != "exlab-client" || version != 1)
    throw std::runtime_error("unrecognized client-state header");
  DetectorConfig cfg;
  int window = 0;
  in >> key >> hex >> window;
  cfg.delta = double_from_hex(hex);
  cfg.window_min = window;
  in >> hex >> tag1 >> tag2;
  cfg.outlier_sigmas = double_from_hex(hex);
  cfg.metric = tag1 == "l2" ? Metric::l2 : Metric::l1;
  cfg.response_mode = tag2 == "flag"    ? ResponseMode::flag
                      : tag2 == "block" ? ResponseMode::block
                                        : ResponseMode::deceive;
  ClientState st(cfg);
  in >> key >> st.queries_;
  int alarm_flag = 0;
  in >> key >> alarm_flag;
  st.alarm_ = alarm_flag != 0;
  long long first = -1;
  in >> key >> first;
  if (first >= 0) st.first_alarm_ = static_cast<std::uint64_t>(first);
  int dim = -1;
  in >> key >> dim;
  if (dim >= 0) st.dim_ = dim;
  std::size_t n = 0;
  in >> key >> n;
  st.dmins_.resize(n);
  for (double& d : st.dmins_) {
    in >> hex;
    d = double_from_hex(hex);
  }
  std::size_t class_count = 0;
  in >> key >> class_count;
  for (std::size_t c = 0; c < class_count; ++c) {
    int cls = 0;
    std::size_t members = 0;
    in >> key >> cls >> members >> hex;
    ClassState cs;
    cs.threshold = double_from_hex(hex);
    in >> key;  // gdmins
    cs.growing_dmins.resize(members);
    for (double& d : cs.growing_dmins) {
      in >> hex;
      d = double_from_hex(hex);
    }
    for (std::size_t s = 0; s < members; ++s) {
      std::size_t len = 0;
      in >> key >> len;
      Vec sample(len);
      for (double& v : sample) {
        in >> hex;
        v = double_from_hex(hex);
      }
      cs.growing.push_back(std::move(sample));
    }
    st.classes_.emplace(cls, std::move(cs));
  }
  if (!in) throw std::runtime_error("truncated client-state file");
  return st;
}

void write_verdict_line(std::ostream& out, std::uint64_t query_index, int cls,
                        const Verdict& v) {
  out << query_index << "," << cls << "," << v.d_min << ",";
  if (v.w)
    out << *v.w;
  else
    out << "null";
  const char* status = v.status == Status::warming_up ? "warming_up"
                        : v.status == Status::benign  ? "benign"
                                                      : "attack";
  out << "," << status << "\n";
}

}  // namespace exlab::detector

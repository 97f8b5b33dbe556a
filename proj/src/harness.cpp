#include "coopgrid/harness.hpp"

#include "coopgrid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace coopgrid {

std::array<double, kNumGroups> group_sums(const std::array<double, kNumClasses>& c) {
  return {c[channel(SemanticClass::Pedestrian)], c[channel(SemanticClass::Car)],
          c[channel(SemanticClass::RoadLines)] + c[channel(SemanticClass::Road)]};
}

EpisodeRecord run_episode(const EnvConfig& cfg, Policy& policy, int steps, std::uint64_t seed,
                          const StepObserver& observer) {
  if (steps < 1) throw ParameterError("episodes need at least one step", "run_episode");
  Environment env(cfg, seed);
  EpisodeRecord rec;
  rec.seed = seed;
  rec.scenario = cfg.scenario.layout;
  rec.policy = policy.id();
  rec.grid_cells = cfg.geometry.cell_count();
  rec.steps.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    StepPreview peek = env.preview();
    const PolicyOutput choice = policy.act(env, peek);
    if (!choice.action.valid()) throw ParameterError("policy emitted an invalid action", policy.id());
    const StepOutcome out = env.commit(std::move(peek), choice.action);
    StepRecord s;
    s.t = t;
    s.action = choice.action;
    s.reward = out.reward;
    s.request_cells = out.box.count();
    s.gained = group_sums(out.gained);
    s.achievable = group_sums(out.achievable);
    s.omega_tilde = out.g_tilde.cells().col(kOmega).mean();
    s.omega_next = out.mean_omega;
    rec.steps.push_back(s);
    if (observer) observer(env, out);
  }
  return rec;
}

MetricsReport info_gain_metrics(const std::vector<EpisodeRecord>& records, GainNormalization mode) {
  if (records.empty()) throw ParameterError("no episode records to evaluate", "info_gain_metrics");
  // Fixed reduction order regardless of how records were produced.
  std::vector<const EpisodeRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const EpisodeRecord* a, const EpisodeRecord* b) {
    return std::tie(a->policy, a->scenario, a->seed) < std::tie(b->policy, b->scenario, b->seed);
  });

  MetricsReport m;
  std::array<double, kNumGroups> gained{}, achievable{}, ratio_sum{};
  std::array<int, kNumGroups> ratio_count{};
  double size_sum = 0.0, reward_sum = 0.0;
  for (const EpisodeRecord* r : sorted) {
    if (r->grid_cells <= 0) throw ParameterError("episode record without grid size", "info_gain_metrics");
    ++m.episodes;
    for (const auto& s : r->steps) {
      ++m.steps;
      size_sum += static_cast<double>(s.request_cells) / r->grid_cells;
      reward_sum += s.reward;
      for (int g = 0; g < kNumGroups; ++g) {
        gained[g] += s.gained[g];
        achievable[g] += s.achievable[g];
        if (s.achievable[g] > 0.0) {
          ratio_sum[g] += std::min(1.0, s.gained[g] / s.achievable[g]);
          ++ratio_count[g];
        }
      }
    }
  }
  if (m.steps == 0) throw ParameterError("episode records hold no steps", "info_gain_metrics");
  for (int g = 0; g < kNumGroups; ++g) {
    double pct = 0.0;
    if (mode == GainNormalization::Pooled) {
      pct = achievable[g] > 0.0 ? 100.0 * gained[g] / achievable[g] : 0.0;
    } else {
      pct = ratio_count[g] > 0 ? 100.0 * ratio_sum[g] / ratio_count[g] : 0.0;
    }
    m.info_gain_pct[g] = std::clamp(pct, 0.0, 100.0);
  }
  m.request_size_pct = 100.0 * size_sum / m.steps;
  m.mean_reward = reward_sum / m.steps;
  return m;
}

std::string format_float(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string episodes_csv_header() {
  return "seed,policy,scenario,grid_cells,t,u,v,w,h,reward,request_cells,gain_p,gain_c,gain_r,achv_p,achv_c,"
         "achv_r,omega_tilde,omega_next";
}

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& records) {
  out << episodes_csv_header() << '\n';
  for (const auto& r : records) {
    for (const auto& s : r.steps) {
      out << r.seed << ',' << r.policy << ',' << r.scenario << ',' << r.grid_cells << ',' << s.t << ','
          << format_float(s.action.u) << ',' << format_float(s.action.v) << ',' << format_float(s.action.w) << ','
          << format_float(s.action.h) << ',' << format_float(s.reward) << ',' << s.request_cells;
      for (double x : s.gained) out << ',' << format_float(x);
      for (double x : s.achievable) out << ',' << format_float(x);
      out << ',' << format_float(s.omega_tilde) << ',' << format_float(s.omega_next) << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw IoError("malformed number '" + s + "'", "episodes.csv:" + std::to_string(line));
}

}  // namespace

std::vector<EpisodeRecord> read_episodes_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty episode CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != episodes_csv_header()) throw IoError("unexpected episode CSV header", line);
  std::vector<EpisodeRecord> records;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 19) throw IoError("expected 19 columns", "episodes.csv:" + std::to_string(lineno));
    const auto seed = static_cast<std::uint64_t>(std::stoull(f[0]));
    if (records.empty() || records.back().seed != seed || records.back().policy != f[1] ||
        records.back().scenario != f[2]) {
      EpisodeRecord r;
      r.seed = seed;
      r.policy = f[1];
      r.scenario = f[2];
      r.grid_cells = static_cast<int>(parse_double(f[3], lineno));
      records.push_back(std::move(r));
    }
    StepRecord s;
    s.t = static_cast<int>(parse_double(f[4], lineno));
    s.action = {parse_double(f[5], lineno), parse_double(f[6], lineno), parse_double(f[7], lineno),
                parse_double(f[8], lineno)};
    s.reward = parse_double(f[9], lineno);
    s.request_cells = static_cast<int>(parse_double(f[10], lineno));
    for (int g = 0; g < kNumGroups; ++g) {
      s.gained[g] = parse_double(f[11 + g], lineno);
      s.achievable[g] = parse_double(f[14 + g], lineno);
    }
    s.omega_tilde = parse_double(f[17], lineno);
    s.omega_next = parse_double(f[18], lineno);
    records.back().steps.push_back(s);
  }
  return records;
}

std::string metrics_csv_header() {
  return "label,episodes,steps,info_gain_p,info_gain_c,info_gain_r,request_size,mean_reward";
}

void write_metrics_csv_row(std::ostream& out, const std::string& label, const MetricsReport& m) {
  out << label << ',' << m.episodes << ',' << m.steps;
  for (double x : m.info_gain_pct) out << ',' << format_float(x);
  out << ',' << format_float(m.request_size_pct) << ',' << format_float(m.mean_reward) << '\n';
}

std::string metrics_json(const std::string& label, const MetricsReport& m) {
  std::ostringstream os;
  os << "{\"label\":\"" << label << "\",\"episodes\":" << m.episodes << ",\"steps\":" << m.steps
     << ",\"info_gain_pct\":{\"P\":" << format_float(m.info_gain_pct[0]) << ",\"C\":" << format_float(m.info_gain_pct[1])
     << ",\"R\":" << format_float(m.info_gain_pct[2]) << "},\"request_size_pct\":" << format_float(m.request_size_pct)
     << ",\"mean_reward\":" << format_float(m.mean_reward) << "}";
  return os.str();
}

MetricsReport metrics_via_csv(const std::vector<EpisodeRecord>& records, GainNormalization mode) {
  std::stringstream ss;
  write_episodes_csv(ss, records);
  return info_gain_metrics(read_episodes_csv(ss), mode);
}

std::string motion_csv_header() { return "t,dx,dy,dtheta,accel,steer,dirx,diry"; }

std::string motion_csv_row(int t, const ObservationBundle& o) {
  std::ostringstream os;
  os << t << ',' << format_float(o.motion.dx) << ',' << format_float(o.motion.dy) << ','
     << format_float(o.motion.dtheta) << ',' << format_float(o.controls.acceleration) << ','
     << format_float(o.controls.steering) << ',' << format_float(o.controls.dir_x) << ','
     << format_float(o.controls.dir_y);
  return os.str();
}

SemanticGrid one_hot_truth(const std::vector<SemanticClass>& classes, const GridGeometry& g) {
  if (static_cast<int>(classes.size()) != g.cell_count()) throw ParameterError("class map size mismatch");
  GridBuilder b(g);
  for (int i = 0; i < g.cell_count(); ++i) {
    b.cells().row(i).setZero();
    b.cells()(i, channel(classes[static_cast<std::size_t>(i)])) = 1.0;
  }
  return std::move(b).build();
}

double mass_score(const SemanticGrid& truth, const SemanticGrid& inferred) {
  if (!(truth.geometry() == inferred.geometry())) throw ParameterError("grids differ in geometry", "mass_score");
  const auto& t = truth.cells();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    int ones = 0;
    for (int k = 0; k < kNumChannels; ++k) {
      if (t(i, k) == 1.0) {
        ++ones;
      } else if (t(i, k) != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ParameterError("truth grid is not one-hot at cell " + std::to_string(i), "mass_score");
  }
  return (t.array() * inferred.cells().array()).rowwise().sum().mean();
}

Eigen::MatrixXd gaussian_kernel(int size) {
  if (size < 1 || size % 2 == 0) throw ParameterError("kernel size must be odd and positive");
  const double sigma = size / 6.0;
  const int h = size / 2;
  Eigen::MatrixXd k(size, size);
  for (int i = -h; i <= h; ++i) {
    for (int j = -h; j <= h; ++j) k(i + h, j + h) = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
  }
  return k / k.sum();
}

namespace {

// Zero-padded same-size correlation (the kernel is symmetric).
Eigen::MatrixXd blur_with(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k) {
  const int h = static_cast<int>(k.rows()) / 2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double s = 0.0;
      for (int i = -h; i <= h; ++i) {
        const Eigen::Index rr = r + i;
        if (rr < 0 || rr >= x.rows()) continue;
        for (int j = -h; j <= h; ++j) {
          const Eigen::Index cc = c + j;
          if (cc < 0 || cc >= x.cols()) continue;
          s += k(i + h, j + h) * x(rr, cc);
        }
      }
      out(r, c) = s;
    }
  }
  return out;
}

}  // namespace

ChangeAccuracy change_accuracy(const std::vector<Eigen::MatrixXd>& truth, const std::vector<Eigen::MatrixXd>& pred,
                               Blur blur) {
  if (truth.size() < 2 || truth.size() != pred.size()) {
    throw ParameterError("change accuracy needs two equal-length sequences of at least 2 grids", "change_accuracy");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].rows() != truth[0].rows() || truth[i].cols() != truth[0].cols() ||
        pred[i].rows() != truth[0].rows() || pred[i].cols() != truth[0].cols()) {
      throw ParameterError("grid sizes differ within the sequences", "change_accuracy");
    }
  }
  std::optional<Eigen::MatrixXd> kernel;
  if (blur == Blur::Gaussian5) kernel = gaussian_kernel(5);
  if (blur == Blur::Gaussian11) kernel = gaussian_kernel(11);

  double true_pos = 0, true_neg = 0, overlap_pos = 0, overlap_neg = 0, hit_pos = 0, hit_neg = 0;
  std::vector<Eigen::MatrixXd> blurred;
  for (std::size_t t = 0; t + 1 < truth.size(); ++t) {
    const Eigen::MatrixXd dy = truth[t + 1] - truth[t];
    const Eigen::MatrixXd dp = pred[t + 1] - pred[t];
    const Eigen::MatrixXd dt = kernel ? blur_with(dy, *kernel) : dy;
    const Eigen::ArrayXXd yp = dy.array().max(0.0), yn = (-dy.array()).max(0.0);
    const Eigen::ArrayXXd tp = dt.array().max(0.0), tn = (-dt.array()).max(0.0);
    const Eigen::ArrayXXd pp = dp.array().max(0.0), pn = (-dp.array()).max(0.0);
    true_pos += yp.sum();
    true_neg += yn.sum();
    overlap_pos += (yp * tp).sum();
    overlap_neg += (yn * tn).sum();
    hit_pos += (pp * tp).sum();
    hit_neg += (pn * tn).sum();
  }
  // Rescaling the blurred truth so that sum y+ * y~+ = sum y+ turns each hit
  // into hit * (sum y+ / overlap); the percentage divides by sum y+ again.
  ChangeAccuracy out;
  out.positive_pct = overlap_pos > 0.0 ? 100.0 * hit_pos / overlap_pos : 0.0;
  out.negative_pct = overlap_neg > 0.0 ? 100.0 * hit_neg / overlap_neg : 0.0;
  return out;
}

Eigen::MatrixXd road_layout(const SemanticGrid& g) {
  Eigen::MatrixXd m(g.height(), g.width());
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      m(r, c) = g.mass(r, c, channel(SemanticClass::Road)) + g.mass(r, c, channel(SemanticClass::RoadLines));
    }
  }
  return m;
}

}  // namespace coopgrid

#include "msissa/sampling.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msissa/error.hpp"
#include "msissa/serialize.hpp"

namespace msissa {
namespace {

std::atomic<bool> g_warnings{true};

constexpr int kMaxRedraws = 1000;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("line " + std::to_string(line_no) + ": column '" + column +
                      "' is not a number ('" + s + "')");
  }
}

int parse_int(const std::string& s, std::size_t line_no, const std::string& column) {
  const double v = parse_double(s, line_no, column);
  if (v != std::floor(v)) throw SchemaError("line " + std::to_string(line_no) + ": column '" +
                                            column + "' must be an integer");
  return static_cast<int>(v);
}

}  // namespace

void log_warning(const std::string& message) {
  if (g_warnings.load()) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

std::vector<ObservedStep> observed_steps(const Track& track) {
  track.validate();
  std::vector<ObservedStep> steps;
  int next_burst = 0;
  for (int b : track.burst) next_burst = std::max(next_burst, b);
  ++next_burst;

  std::size_t start = 0;
  while (start < track.size()) {
    std::size_t end = start + 1;
    while (end < track.size() && track.burst[end] == track.burst[start]) ++end;
    int burst_id = track.burst[start];
    bool split_pending = false;
    for (std::size_t j = start + 1; j + 1 < end; ++j) {
      const Point prev = track.xy[j - 1], from = track.xy[j], to = track.xy[j + 1];
      const double l_in = std::hypot(from.x - prev.x, from.y - prev.y);
      const double l = std::hypot(to.x - from.x, to.y - from.y);
      if (l_in == 0.0 || l == 0.0) {
        if (l == 0.0)
          log_warning("dropping zero-length step at burst " + std::to_string(track.burst[j]) +
                      ", t " + std::to_string(track.t[j + 1]));
        split_pending = true;
        continue;
      }
      if (split_pending) {
        if (!steps.empty() && steps.back().burst == burst_id) burst_id = next_burst++;
        split_pending = false;
      }
      ObservedStep s;
      s.burst = burst_id;
      s.t = track.t[j + 1];
      s.origin = j;
      s.prev = prev;
      s.from = from;
      s.to = to;
      s.l = l;
      s.alpha = wrap_angle(std::atan2(to.y - from.y, to.x - from.x) -
                           std::atan2(from.y - prev.y, from.x - prev.x));
      steps.push_back(s);
    }
    start = end;
  }
  return steps;
}

std::size_t CaseControlData::max_controls() const {
  std::size_t m = 0;
  for (std::size_t s = 0; s < n_sets(); ++s) m = std::max(m, set_size(s) - 1);
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> CaseControlData::burst_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t s = 0;
  while (s < n_sets()) {
    std::size_t e = s + 1;
    while (e < n_sets() && set_burst[e] == set_burst[s]) ++e;
    out.emplace_back(s, e);
    s = e;
  }
  return out;
}

void CaseControlData::validate() const {
  const std::size_t n = n_sets();
  if (n == 0) throw ValidationError("case-control data has no choice sets");
  if (set_t.size() != n || set_begin.size() != n + 1)
    throw ValidationError("choice-set index arrays are inconsistent");
  if (set_begin.front() != 0 || set_begin.back() != n_rows())
    throw ValidationError("choice-set offsets do not cover all rows");
  if (xy.size() != n_rows() || alpha.size() != n_rows() || offset.size() != n_rows() ||
      static_cast<std::size_t>(design.rows()) != n_rows() ||
      static_cast<std::size_t>(design.cols()) != p() + q())
    throw ValidationError("case-control row arrays are inconsistent");
  for (std::size_t s = 0; s < n; ++s)
    if (set_begin[s + 1] < set_begin[s] + 2)
      throw ValidationError("choice set " + std::to_string(s) + " has no control alternatives");
}

ProposalFit fit_proposal(std::span<const ObservedStep> steps, const MovementKernelSpec& spec,
                         bool use_moments) {
  if (steps.size() < 10) throw ValidationError("at least 10 steps are needed to fit a proposal");
  std::vector<double> lengths, angles;
  lengths.reserve(steps.size());
  angles.reserve(steps.size());
  for (const auto& s : steps) {
    lengths.push_back(s.l);
    angles.push_back(s.alpha);
  }
  ProposalFit fit{use_moments ? fit_step_moments(spec.step, lengths)
                              : fit_step_mle(spec.step, lengths),
                  UniformTurn{}};
  if (spec.turn == TurnFamily::VonMises) fit.turn = fit_turn_mle(TurnFamily::VonMises, angles);
  return fit;
}

ProposalFit fit_proposal(const Track& track, const MovementKernelSpec& spec, bool use_moments) {
  // Step lengths of every step (including the first of each burst); angles of
  // steps with a defined turn.
  track.validate();
  std::vector<double> lengths, angles;
  for (std::size_t j = 1; j < track.size(); ++j) {
    if (track.burst[j] != track.burst[j - 1]) continue;
    const double l = std::hypot(track.xy[j].x - track.xy[j - 1].x, track.xy[j].y - track.xy[j - 1].y);
    if (l > 0.0) lengths.push_back(l);
  }
  for (const auto& s : observed_steps(track)) angles.push_back(s.alpha);
  if (lengths.size() < 10) throw ValidationError("at least 10 steps are needed to fit a proposal");
  ProposalFit fit{use_moments ? fit_step_moments(spec.step, lengths)
                              : fit_step_mle(spec.step, lengths),
                  UniformTurn{}};
  if (spec.turn == TurnFamily::VonMises) fit.turn = fit_turn_mle(TurnFamily::VonMises, angles);
  return fit;
}

CaseControlData build_choice_sets(std::span<const ObservedStep> steps, const Habitat& habitat,
                                  const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                  std::size_t M, std::uint64_t seed) {
  scheme.validate(spec);
  habitat.validate();
  if (scheme.kind != SchemeKind::Grid && M < 1) throw ValidationError("M must be at least 1");
  if (steps.empty()) throw ValidationError("no steps to build choice sets from");

  const std::size_t p = spec.n_coef(), q = habitat.size();
  const bool offset = scheme.has_offset(spec);

  // Grid candidate offsets relative to the current location.
  std::vector<Point> grid_offsets;
  if (scheme.kind == SchemeKind::Grid) {
    const int k = static_cast<int>(std::floor(scheme.grid_radius / scheme.grid_resolution));
    for (int i = -k; i <= k; ++i)
      for (int j = -k; j <= k; ++j) {
        const double dx = i * scheme.grid_resolution, dy = j * scheme.grid_resolution;
        const double d = std::hypot(dx, dy);
        if (d > 0.0 && d <= scheme.grid_radius) grid_offsets.push_back({dx, dy});
      }
    if (grid_offsets.empty()) throw ValidationError("grid radius yields no candidate locations");
  }

  CaseControlData data;
  data.kernel = spec;
  data.scheme = scheme;
  data.habitat_names = habitat.names;

  struct Row {
    Point xy;
    double l, alpha;
  };
  std::vector<Row> rows;
  rows.reserve(steps.size() * (M + 1));
  data.set_begin.push_back(0);

  std::vector<Row> alts;
  for (const auto& st : steps) {
    const double heading = std::atan2(st.from.y - st.prev.y, st.from.x - st.prev.x);
    alts.clear();
    alts.push_back({st.to, st.l, st.alpha});
    if (scheme.kind == SchemeKind::Grid) {
      for (const auto& o : grid_offsets) {
        const Point end{st.from.x + o.x, st.from.y + o.y};
        if (!habitat.contains(end)) continue;
        const double l = std::hypot(o.x, o.y);
        const double a = wrap_angle(std::atan2(o.y, o.x) - heading);
        alts.push_back({end, l, a});
      }
      if (alts.size() < 2)
        throw ValidationError("no grid candidates inside the habitat at t " + std::to_string(st.t));
    } else {
      Rng rng(seed, "control-steps", st.origin, static_cast<std::uint64_t>(st.burst));
      for (std::size_t m = 0; m < M; ++m) {
        int attempt = 0;
        for (;; ++attempt) {
          if (attempt >= kMaxRedraws)
            throw ValidationError("control redraw budget exhausted at burst " +
                                  std::to_string(st.burst) + ", t " + std::to_string(st.t));
          double l, a;
          if (scheme.kind == SchemeKind::Importance) {
            l = step_sample(*scheme.step_proposal, rng);
            a = scheme.turn_proposal ? turn_sample(TurnDistribution{*scheme.turn_proposal}, rng)
                                     : turn_sample(UniformTurn{}, rng);
          } else {
            l = scheme.max_step * rng.uniform_pos();
            a = turn_sample(UniformTurn{}, rng);
          }
          if (!(l > 0.0)) continue;
          const Point end{st.from.x + l * std::cos(heading + a), st.from.y + l * std::sin(heading + a)};
          if (!habitat.contains(end)) continue;
          alts.push_back({end, l, a});
          break;
        }
      }
    }
    data.set_burst.push_back(st.burst);
    data.set_t.push_back(st.t);
    data.set_origin.push_back(st.origin);
    rows.insert(rows.end(), alts.begin(), alts.end());
    data.set_begin.push_back(rows.size());
  }

  const std::size_t n = rows.size();
  data.xy.resize(n);
  data.l.resize(n);
  data.alpha.resize(n);
  data.offset.assign(n, 0.0);
  data.design.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + q));
  std::vector<double> c(p), z(q);
  for (std::size_t r = 0; r < n; ++r) {
    data.xy[r] = rows[r].xy;
    data.l[r] = rows[r].l;
    data.alpha[r] = rows[r].alpha;
    movement_covariates(spec, rows[r].l, rows[r].alpha, c);
    habitat.values_at(rows[r].xy, z);
    for (std::size_t k = 0; k < p; ++k) data.design(static_cast<Eigen::Index>(r), k) = c[k];
    for (std::size_t k = 0; k < q; ++k) data.design(static_cast<Eigen::Index>(r), p + k) = z[k];
    if (offset) data.offset[r] = -std::log(rows[r].l);
  }
  return data;
}

CaseControlData generate_choice_sets(const Track& track, const Habitat& habitat,
                                     const MovementKernelSpec& spec, const SamplingScheme& scheme,
                                     std::size_t M, Rng& rng) {
  const auto steps = observed_steps(track);
  return build_choice_sets(steps, habitat, spec, scheme, M, rng.next_u64());
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".meta.json");
}

void write_case_control(const CaseControlData& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write case-control file '" + path.string() + "'");
  out << std::setprecision(17);
  out << "burst,t,alt,case,x,y,l,alpha";
  for (std::size_t k = 1; k <= data.p(); ++k) out << ",C_" << k;
  for (std::size_t k = 1; k <= data.q(); ++k) out << ",Z_" << k;
  out << ",offset\n";
  for (std::size_t s = 0; s < data.n_sets(); ++s) {
    for (std::size_t r = data.set_begin[s]; r < data.set_begin[s + 1]; ++r) {
      const std::size_t alt = r - data.set_begin[s];
      out << data.set_burst[s] << ',' << data.set_t[s] << ',' << alt << ',' << (alt == 0 ? 1 : 0)
          << ',' << data.xy[r].x << ',' << data.xy[r].y << ',' << data.l[r] << ',' << data.alpha[r];
      for (Eigen::Index k = 0; k < data.design.cols(); ++k)
        out << ',' << data.design(static_cast<Eigen::Index>(r), k);
      out << ',' << data.offset[r] << '\n';
    }
  }
  if (!out) throw IoError("failed writing case-control file '" + path.string() + "'");

  nlohmann::json meta;
  meta["kernel"] = kernel_spec_to_json(data.kernel);
  meta["scheme"] = scheme_to_json(data.scheme);
  meta["habitat_names"] = data.habitat_names;
  meta["movement_names"] = data.kernel.covariate_names();
  meta["M"] = data.max_controls();
  std::ofstream side(sidecar_path(path));
  if (!side) throw IoError("cannot write sidecar '" + sidecar_path(path).string() + "'");
  side << std::setw(2) << meta << '\n';
}

CaseControlData read_case_control(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case-control file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("line 1: empty case-control file");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* req : {"burst", "t", "alt", "case", "x", "y", "l", "alpha", "offset"})
    if (!col.count(req)) throw SchemaError("line 1: missing column '" + std::string(req) + "'");
  std::size_t p = 0, q = 0;
  while (col.count("C_" + std::to_string(p + 1))) ++p;
  while (col.count("Z_" + std::to_string(q + 1))) ++q;
  for (const auto& h : header) {
    const bool is_c = h.rfind("C_", 0) == 0, is_z = h.rfind("Z_", 0) == 0;
    if ((is_c || is_z) && !col.count(h)) continue;
    if (is_c && std::stoul(h.substr(2)) > p) throw SchemaError("line 1: non-contiguous C columns");
    if (is_z && std::stoul(h.substr(2)) > q) throw SchemaError("line 1: non-contiguous Z columns");
  }

  CaseControlData data;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream sin(side);
    nlohmann::json meta;
    try {
      sin >> meta;
      data.kernel = kernel_spec_from_json(meta.at("kernel"));
      data.scheme = scheme_from_json(meta.at("scheme"));
      data.habitat_names = meta.at("habitat_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed sidecar '" + side.string() + "': " + e.what());
    }
    if (data.kernel.n_coef() != p)
      throw SchemaError("sidecar kernel expects " + std::to_string(data.kernel.n_coef()) +
                        " C columns, file has " + std::to_string(p));
    if (data.habitat_names.size() != q) throw SchemaError("sidecar habitat names do not match Z columns");
  } else {
    switch (p) {
      case 1: data.kernel = {StepFamily::Exponential, TurnFamily::Uniform}; break;
      case 2: data.kernel = {StepFamily::Gamma, TurnFamily::Uniform}; break;
      case 3: data.kernel = {StepFamily::Gamma, TurnFamily::VonMises}; break;
      default: throw SchemaError("cannot infer the movement kernel from " + std::to_string(p) +
                                 " C columns without a sidecar");
    }
    data.scheme = SamplingScheme::uniform_steps(1.0);
    for (std::size_t k = 1; k <= q; ++k) data.habitat_names.push_back("Z_" + std::to_string(k));
  }

  std::vector<double> design_flat;
  std::size_t line_no = 1;
  bool in_set = false;
  int cur_burst = 0, cur_t = 0;
  std::size_t cur_alt = 0;
  std::vector<int> seen_bursts;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    const int burst = parse_int(f[col["burst"]], line_no, "burst");
    const int t = parse_int(f[col["t"]], line_no, "t");
    const int alt = parse_int(f[col["alt"]], line_no, "alt");
    const int is_case = parse_int(f[col["case"]], line_no, "case");
    if (is_case != 0 && is_case != 1)
      throw SchemaError("line " + std::to_string(line_no) + ": case must be 0 or 1");

    const bool new_set = !in_set || burst != cur_burst || t != cur_t;
    if (new_set) {
      if (in_set && cur_alt < 2)
        throw SchemaError("line " + std::to_string(line_no) + ": stratum (" +
                          std::to_string(cur_burst) + ", " + std::to_string(cur_t) +
                          ") has no control rows");
      if (in_set && burst == cur_burst && t != cur_t + 1)
        throw SchemaError("line " + std::to_string(line_no) + ": non-contiguous step ids in burst " +
                          std::to_string(burst) + " (t " + std::to_string(cur_t) + " followed by " +
                          std::to_string(t) + ")");
      if (!in_set || burst != cur_burst) {
        if (std::find(seen_bursts.begin(), seen_bursts.end(), burst) != seen_bursts.end())
          throw SchemaError("line " + std::to_string(line_no) + ": burst " +
                            std::to_string(burst) + " is not contiguous");
        seen_bursts.push_back(burst);
      }
      if (alt != 0 || is_case != 1)
        throw SchemaError("line " + std::to_string(line_no) + ": stratum (" + std::to_string(burst) +
                          ", " + std::to_string(t) + ") must start with its case row at alt 0");
      data.set_burst.push_back(burst);
      data.set_t.push_back(t);
      data.set_origin.push_back(data.set_burst.size() - 1);
      data.set_begin.push_back(data.l.size());
      cur_burst = burst;
      cur_t = t;
      cur_alt = 0;
      in_set = true;
    } else {
      if (is_case == 1)
        throw SchemaError("line " + std::to_string(line_no) + ": second case row in stratum (" +
                          std::to_string(burst) + ", " + std::to_string(t) + ")");
      if (static_cast<std::size_t>(alt) != cur_alt)
        throw SchemaError("line " + std::to_string(line_no) + ": alternative index " +
                          std::to_string(alt) + " out of sequence");
    }
    ++cur_alt;
    data.xy.push_back({parse_double(f[col["x"]], line_no, "x"), parse_double(f[col["y"]], line_no, "y")});
    data.l.push_back(parse_double(f[col["l"]], line_no, "l"));
    data.alpha.push_back(parse_double(f[col["alpha"]], line_no, "alpha"));
    data.offset.push_back(parse_double(f[col["offset"]], line_no, "offset"));
    for (std::size_t k = 1; k <= p; ++k) {
      const std::string name = "C_" + std::to_string(k);
      design_flat.push_back(parse_double(f[col[name]], line_no, name));
    }
    for (std::size_t k = 1; k <= q; ++k) {
      const std::string name = "Z_" + std::to_string(k);
      design_flat.push_back(parse_double(f[col[name]], line_no, name));
    }
  }
  if (!in_set) throw SchemaError("line " + std::to_string(line_no) + ": no data rows");
  if (cur_alt < 2)
    throw SchemaError("line " + std::to_string(line_no) + ": final stratum has no control rows");
  data.set_begin.push_back(data.l.size());

  const auto n = static_cast<Eigen::Index>(data.l.size());
  const auto cols = static_cast<Eigen::Index>(p + q);
  data.design = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      design_flat.data(), n, cols);
  data.validate();
  return data;
}

void write_track(const Track& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write track '" + path.string() + "'");
  out << std::setprecision(17) << "burst,t,x,y\n";
  for (std::size_t i = 0; i < track.size(); ++i)
    out << track.burst[i] << ',' << track.t[i] << ',' << track.xy[i].x << ',' << track.xy[i].y << '\n';
  if (!out) throw IoError("failed writing track '" + path.string() + "'");
}

Track read_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("line 1: empty track file");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* req : {"burst", "t", "x", "y"})
    if (!col.count(req)) throw SchemaError("line 1: missing column '" + std::string(req) + "'");
  Track track;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + ": wrong number of fields");
    track.push_back({parse_double(f[col["x"]], line_no, "x"), parse_double(f[col["y"]], line_no, "y")},
                    parse_int(f[col["burst"]], line_no, "burst"), parse_int(f[col["t"]], line_no, "t"));
  }
  track.validate();
  return track;
}

}  // namespace msissa

#include "walkcap/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "walkcap/capacity.hpp"
#include "walkcap/corrector.hpp"
#include "walkcap/deviation.hpp"
#include "walkcap/errors.hpp"
#include "walkcap/folding.hpp"
#include "walkcap/lattice.hpp"
#include "walkcap/stats.hpp"

namespace walkcap {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

const std::set<std::string> kCommands = {"capacity", "corrector", "xistar", "fold", "confine"};

void validate(const ExperimentConfig& cfg) {
  if (!kCommands.count(cfg.command))
    throw UsageError("unknown experiment command '" + cfg.command +
                     "' (expected capacity, corrector, xistar, fold or confine)");
  if (cfg.d < 3 || cfg.d > kMaxDim) throw UsageError("d must lie in [3, 8]");
  if (cfg.workers == 0) throw UsageError("workers must be positive");
  if ((cfg.command == "corrector" || cfg.command == "xistar") && cfg.T == 0) throw UsageError("T must be positive");
  if (cfg.command == "fold" && !(cfg.zeta > 0)) throw UsageError("fold needs zeta > 0");
}

std::string extra_or(const ExperimentConfig& cfg, const std::string& key, const std::string& fallback) {
  const auto it = cfg.extra.find(key);
  return it == cfg.extra.end() ? fallback : it->second;
}

double extra_double(const ExperimentConfig& cfg, const std::string& key, double fallback) {
  const auto it = cfg.extra.find(key);
  return it == cfg.extra.end() ? fallback : parse_number<double>(key, it->second);
}

std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string header_json(const ExperimentConfig& cfg) {
  std::string s = "{\"type\":\"header\",\"version\":" + json_escape(kVersion) + ",\"timestamp\":" +
                  json_escape(timestamp()) + ",\"config\":{";
  bool first = true;
  for (const auto& [k, v] : cfg.entries()) {
    if (!first) s += ',';
    first = false;
    s += json_escape(k) + ':' + json_escape(v);
  }
  return s + "}}";
}

std::string trailer_json(std::size_t rows, std::uint64_t checksum) {
  return "{\"type\":\"trailer\",\"rows\":" + std::to_string(rows) + ",\"checksum\":\"" + hex64(checksum) + "\"}";
}

std::string summary_csv(const Summary& s) {
  std::string out = "count,errors,mean,variance,stderr,q05,q50,q95,ci_lo,ci_hi\n";
  out += std::to_string(s.count) + ',' + std::to_string(s.errors);
  for (double v : {s.mean, s.variance, s.stdError, s.q05, s.q50, s.q95, s.ciLo, s.ciHi}) out += ',' + format_double(v);
  return out + '\n';
}

std::string summary_json(const Summary& s) {
  return "{\"count\":" + std::to_string(s.count) + ",\"errors\":" + std::to_string(s.errors) +
         ",\"mean\":" + format_double(s.mean) + ",\"variance\":" + format_double(s.variance) +
         ",\"stderr\":" + format_double(s.stdError) + ",\"q05\":" + format_double(s.q05) +
         ",\"q50\":" + format_double(s.q50) + ",\"q95\":" + format_double(s.q95) +
         ",\"ci_lo\":" + format_double(s.ciLo) + ",\"ci_hi\":" + format_double(s.ciHi) + "}";
}

Row row_from_json(const nlohmann::json& j) {
  Row r;
  r.index = j.at("index").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  if (!r.ok) {
    r.error = j.value("error", std::string{});
    return r;
  }
  r.value = j.at("value").is_null() ? std::nan("") : j.at("value").get<double>();
  if (j.contains("fields"))
    for (const auto& [k, v] : j.at("fields").items()) r.fields.emplace_back(k, v.is_null() ? std::nan("") : v.get<double>());
  return r;
}

Walk fold_walk(const ExperimentConfig& cfg, std::uint64_t seed) {
  const double L = extra_double(cfg, "confineL", 0);
  if (L <= 0) return simulate_walk(cfg.n, seed, cfg.d);
  const auto tau = static_cast<std::size_t>(extra_double(cfg, "confineTau", cfg.zeta));
  auto res = confine_sample(cfg.n, static_cast<std::int64_t>(L), seed, cfg.d, ConfineSampler::Conditioned, 1, tau);
  if (!res.walk) throw NumericError("conditioned sampler failed");
  return *res.walk;
}

}  // namespace

void ExperimentConfig::set(const std::string& rawKey, const std::string& rawValue) {
  const std::string key = trim(rawKey), value = trim(rawValue);
  if (key.empty()) throw UsageError("empty config key");
  if (key == "command") command = value;
  else if (key == "d") d = parse_number<int>(key, value);
  else if (key == "n") n = parse_number<std::size_t>(key, value);
  else if (key == "zeta") zeta = parse_number<double>(key, value);
  else if (key == "T") T = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "count") count = parse_number<std::size_t>(key, value);
  else if (key == "first") firstIndex = parse_number<std::size_t>(key, value);
  else if (key == "tolerance") tolerance = parse_number<double>(key, value);
  else if (key == "C0") C0 = parse_number<double>(key, value);
  else if (key == "output") output = value;
  else if (key == "workers") workers = parse_number<std::size_t>(key, value);
  else extra[key] = value;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out = {
      {"command", command},
      {"d", std::to_string(d)},
      {"n", std::to_string(n)},
      {"zeta", format_double(zeta)},
      {"T", std::to_string(T)},
      {"seed", std::to_string(seed)},
      {"count", std::to_string(count)},
      {"first", std::to_string(firstIndex)},
      {"tolerance", format_double(tolerance)},
      {"C0", format_double(C0)},
  };
  for (const auto& kv : extra) out.push_back(kv);
  // output path and worker count do not affect results and are left out
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineNo) + ": expected key=value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + o + "' is not key=value");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
}

std::string format_double(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string row_json(const Row& row) {
  std::string s = "{\"type\":\"row\",\"index\":" + std::to_string(row.index) + ",\"seed\":" + std::to_string(row.seed);
  if (!row.ok) return s + ",\"ok\":false,\"error\":" + json_escape(row.error) + "}";
  s += ",\"ok\":true,\"value\":" + format_double(row.value) + ",\"fields\":{";
  for (std::size_t i = 0; i < row.fields.size(); ++i) {
    if (i) s += ',';
    s += json_escape(row.fields[i].first) + ':' + format_double(row.fields[i].second);
  }
  return s + "}}";
}

Summary summarize_rows(const std::vector<Row>& rows) {
  Summary s;
  std::vector<double> xs;
  Moments m;
  for (const auto& r : rows) {
    if (!r.ok || !std::isfinite(r.value)) {
      ++s.errors;
      continue;
    }
    xs.push_back(r.value);
    m.add(r.value);
  }
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = m.mean;
  s.variance = m.variance();
  s.stdError = m.std_error();
  s.q05 = quantile(xs, 0.05);
  s.q50 = quantile(xs, 0.5);
  s.q95 = quantile(xs, 0.95);
  s.ciLo = s.mean - 1.959963984540054 * s.stdError;
  s.ciHi = s.mean + 1.959963984540054 * s.stdError;
  return s;
}

Row run_one(const ExperimentConfig& cfg, std::size_t index) {
  Row row;
  row.index = index;
  row.seed = derive_seed(cfg.seed, index);
  try {
    SolverOptions opt;
    opt.residualTolerance = cfg.tolerance;
    opt.maxSize = std::max<std::size_t>(opt.maxSize, cfg.n + 1);
    if (cfg.command == "capacity") {
      const Walk w = simulate_walk(cfg.n, row.seed, cfg.d);
      const PointSet range = range_of(w, 0, cfg.n);
      row.value = capacity(range, opt);
      row.fields = {{"size", static_cast<double>(range.size())},
                    {"per_step", cfg.n ? row.value / static_cast<double>(cfg.n) : row.value}};
    } else if (cfg.command == "corrector") {
      const Walk w = simulate_walk(cfg.n, row.seed, cfg.d);
      CorrectorOptions copt;
      copt.maxN = std::max(copt.maxN, cfg.n);
      const auto tr = xi_n(w, cfg.T, copt);
      row.value = tr.total;
      row.fields = {{"chi_n", chi_n(w, cfg.T)}, {"refactorizations", static_cast<double>(tr.refactorizations)}};
    } else if (cfg.command == "xistar") {
      const Walk w = simulate_walk(cfg.n, row.seed, cfg.d);
      const auto inner = static_cast<std::size_t>(extra_double(cfg, "inner", 100));
      CorrectorOptions copt;
      copt.maxN = std::max(copt.maxN, cfg.n);
      const auto est = xi_star_mc(w, cfg.T, inner, derive_seed(row.seed, 1));
      row.value = est.estimate;
      row.fields = {{"stderr", est.stdError}, {"xi", xi_n(w, cfg.T, copt).total}};
    } else if (cfg.command == "fold") {
      const Walk w = fold_walk(cfg, row.seed);
      const auto lad = ladder(cfg.d, cfg.n, cfg.zeta, cfg.C0, LadderVariant::Auto,
                              extra_or(cfg, "allowD6", "0") == "1");
      const auto prof = fold_profile(w, lad);
      const double delta = extra_double(cfg, "delta", 0.25);
      const int I = static_cast<int>(extra_double(cfg, "I", 3));
      double best = 0;
      for (std::size_t q = 0; q < prof.index.size(); ++q)
        if (std::abs(prof.index[q]) <= I)
          best = std::max(best, static_cast<double>(prof.perLevel[q]) / lad.level(prof.index[q]).L);
      row.value = detector_fires(prof, lad, delta, I) ? 1.0 : 0.0;
      row.fields = {{"max_ratio", best}, {"residual", static_cast<double>(prof.residual)}};
    } else if (cfg.command == "confine") {
      std::int64_t L = static_cast<std::int64_t>(extra_double(cfg, "L", 0));
      if (L <= 0) {
        if (!(cfg.zeta > 0)) throw UsageError("confine needs L or zeta");
        L = plan_strategy(cfg.d, cfg.n, cfg.zeta).box_side();
      }
      const auto sampler =
          extra_or(cfg, "sampler", "rejection") == "conditioned" ? ConfineSampler::Conditioned : ConfineSampler::Rejection;
      const auto maxAttempts = static_cast<std::size_t>(extra_double(cfg, "maxAttempts", 1e6));
      const auto res = confine_sample(cfg.n, L, row.seed, cfg.d, sampler, maxAttempts);
      if (!res.walk) throw NumericError("rejection budget exhausted after " + std::to_string(res.attempts) + " attempts");
      row.value = capacity(range_of(*res.walk, 0, cfg.n), opt);
      row.fields = {{"L", static_cast<double>(L)},
                    {"attempts", static_cast<double>(res.attempts)},
                    {"approximate", res.approximate ? 1.0 : 0.0}};
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    row = Row{index, row.seed, false, e.what(), 0, {}};
  }
  return row;
}

ResultRecord run(const ExperimentConfig& cfg) {
  validate(cfg);
  ResultRecord rec;
  rec.config = cfg;
  rec.header = header_json(cfg);

  std::optional<std::ofstream> out;
  if (!cfg.output.empty()) {
    out.emplace(cfg.output, std::ios::trunc);
    if (!*out) throw UsageError("cannot write " + cfg.output);
    *out << rec.header << '\n' << std::flush;
  }

  const std::size_t total = cfg.count;
  std::vector<std::optional<Row>> slots(total);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= total) return;
      Row r;
      try {
        r = run_one(cfg, cfg.firstIndex + k);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
        next.store(total);
        cv.notify_all();
        return;
      }
      std::lock_guard lk(mu);
      slots[k] = std::move(r);
      cv.notify_all();
    }
  };

  std::vector<std::jthread> pool;
  const std::size_t nw = std::min(cfg.workers, std::max<std::size_t>(total, 1));
  for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);

  std::uint64_t checksum = fnv1a("");
  for (std::size_t k = 0; k < total; ++k) {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return slots[k].has_value() || failure; });
    if (!slots[k]) break;
    Row r = std::move(*slots[k]);
    lk.unlock();
    const std::string line = row_json(r);
    checksum = fnv1a(line + '\n', checksum);
    if (out) *out << line << '\n' << std::flush;
    rec.rows.push_back(std::move(r));
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);

  rec.summary = summarize_rows(rec.rows);
  if (rec.summary.errors) rec.note = std::to_string(rec.summary.errors) + " rows failed";
  rec.complete = rec.summary.errors == 0;
  if (out) {
    *out << trailer_json(rec.rows.size(), checksum) << '\n';
    out->close();
    std::ofstream csv(cfg.output + ".csv", std::ios::trunc);
    csv << summary_csv(rec.summary);
  }
  return rec;
}

LoadedRun load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  LoadedRun run;
  run.path = path;
  std::string line;
  bool haveHeader = false, haveTrailer = false;
  std::uint64_t checksum = fnv1a("");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      run.truncated = true;
      run.problem = "unparsable line";
      break;
    }
    const std::string type = j.value("type", std::string{});
    if (type == "header") {
      haveHeader = true;
      const auto& c = j.at("config");
      run.command = c.at("command").get<std::string>();
      run.d = std::stoi(c.at("d").get<std::string>());
      run.n = std::stoull(c.at("n").get<std::string>());
    } else if (type == "row") {
      checksum = fnv1a(line + '\n', checksum);
      run.rows.push_back(row_from_json(j));
    } else if (type == "trailer") {
      haveTrailer = true;
      if (j.at("rows").get<std::size_t>() != run.rows.size()) {
        run.truncated = true;
        run.problem = "row count does not match trailer";
      } else if (j.at("checksum").get<std::string>() != hex64(checksum)) {
        run.truncated = true;
        run.problem = "row checksum mismatch";
      }
    }
  }
  if (!haveHeader) throw UsageError(path + ": missing header");
  if (!haveTrailer && !run.truncated) {
    run.truncated = true;
    run.problem = "missing trailer";
  }
  return run;
}

AggregateReport summarize(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("summarize needs at least one input");
  AggregateReport rep;
  std::set<std::uint64_t> seeds;
  std::size_t n = 0;
  for (std::size_t f = 0; f < paths.size(); ++f) {
    LoadedRun run = load_run(paths[f]);
    if (f == 0) {
      rep.command = run.command;
      rep.d = run.d;
      n = run.n;
    } else if (run.command != rep.command || run.d != rep.d || run.n != n) {
      throw UsageError("mixed configurations: " + paths[0] + " and " + paths[f]);
    }
    for (const auto& r : run.rows)
      if (!seeds.insert(r.seed).second) throw UsageError("seed blocks overlap at seed " + std::to_string(r.seed));
    if (run.truncated) rep.problems.push_back(run.path + ": " + run.problem);
    rep.blocks.push_back({run.path, summarize_rows(run.rows)});
  }
  for (const auto& b : rep.blocks) rep.total += b.summary.count;
  if (rep.total == 0) return rep;
  double var = 0;
  for (const auto& b : rep.blocks) {
    const double w = static_cast<double>(b.summary.count) / static_cast<double>(rep.total);
    rep.pooledMean += w * b.summary.mean;
    var += w * w * b.summary.stdError * b.summary.stdError;
  }
  rep.pooledStdError = std::sqrt(var);
  rep.ciLo = rep.pooledMean - 1.959963984540054 * rep.pooledStdError;
  rep.ciHi = rep.pooledMean + 1.959963984540054 * rep.pooledStdError;
  return rep;
}

std::string AggregateReport::to_json() const {
  std::string s = "{\"command\":" + json_escape(command) + ",\"d\":" + std::to_string(d) +
                  ",\"total\":" + std::to_string(total) + ",\"pooled_mean\":" + format_double(pooledMean) +
                  ",\"pooled_stderr\":" + format_double(pooledStdError) + ",\"ci_lo\":" + format_double(ciLo) +
                  ",\"ci_hi\":" + format_double(ciHi) + ",\"blocks\":[";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) s += ',';
    s += "{\"path\":" + json_escape(blocks[i].path) + ",\"summary\":" + summary_json(blocks[i].summary) + "}";
  }
  s += "],\"problems\":[";
  for (std::size_t i = 0; i < problems.size(); ++i) s += (i ? "," : "") + json_escape(problems[i]);
  return s + "]}";
}

std::string AggregateReport::to_csv() const {
  std::string s = "block,count,errors,mean,variance,stderr,q05,q50,q95\n";
  for (const auto& b : blocks) {
    const auto& m = b.summary;
    s += b.path + ',' + std::to_string(m.count) + ',' + std::to_string(m.errors);
    for (double v : {m.mean, m.variance, m.stdError, m.q05, m.q50, m.q95}) s += ',' + format_double(v);
    s += '\n';
  }
  s += "pooled," + std::to_string(total) + ",," + format_double(pooledMean) + ",," + format_double(pooledStdError) +
       ",,,\n";
  return s;
}

}  // namespace walkcap

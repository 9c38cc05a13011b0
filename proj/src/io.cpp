#include "haloscope/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "haloscope/config.hpp"

namespace haloscope {

namespace {

constexpr char kBinaryMagic[8] = {'H', 'S', 'C', 'L', 'I', 'C', 'K', '1'};

std::runtime_error io_error(const std::string& path, const std::string& what) {
  return std::runtime_error(path + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, const std::string& path, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw io_error(path, "line " + std::to_string(line_no) + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

Phase parse_phase(std::string_view token, const std::string& path, std::size_t line_no) {
  if (token == "ON") return Phase::kOn;
  if (token == "OFF") return Phase::kOff;
  throw io_error(path, "line " + std::to_string(line_no) + ": phase must be ON or OFF");
}

BlockKind parse_kind(std::string_view token, const std::string& path, std::size_t line_no) {
  for (const BlockKind k : {BlockKind::kDetect, BlockKind::kCalibrate, BlockKind::kTune, BlockKind::kWait}) {
    if (token == to_string(k)) return k;
  }
  throw io_error(path, "line " + std::to_string(line_no) + ": unknown block kind");
}

// Header comments of the form "# key value".
void parse_header_line(std::string_view line, Provenance& prov, double* duration) {
  const auto tokens = split_ws(line.substr(1));
  if (tokens.size() != 2) return;
  if (tokens[0] == "digest") {
    std::uint64_t v = 0;
    std::from_chars(tokens[1].data(), tokens[1].data() + tokens[1].size(), v, 16);
    prov.digest = v;
  } else if (tokens[0] == "seed") {
    std::uint64_t v = 0;
    std::from_chars(tokens[1].data(), tokens[1].data() + tokens[1].size(), v);
    prov.seed = v;
  } else if (tokens[0] == "duration_s" && duration != nullptr) {
    std::from_chars(tokens[1].data(), tokens[1].data() + tokens[1].size(), *duration);
  }
}

void write_provenance(std::ostream& out, const Provenance& prov) {
  out << "# digest " << digest_hex(prov.digest) << "\n# seed " << prov.seed << '\n';
}

std::ifstream open_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path, "cannot open for reading");
  return in;
}

}  // namespace

AtomicFile::AtomicFile(std::string path, bool binary) : path_(std::move(path)), temp_(path_ + ".tmp") {
  out_.open(temp_, binary ? std::ios::out | std::ios::binary | std::ios::trunc : std::ios::out | std::ios::trunc);
  if (!out_) throw io_error(path_, "cannot create output file");
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(temp_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) throw io_error(path_, "write failed");
  out_.close();
  std::filesystem::rename(temp_, path_);
  committed_ = true;
}

StreamWriter::StreamWriter(const std::string& path, const StreamHeader& header)
    : file_(path, header.binary), binary_(header.binary) {
  std::ofstream& out = file_.stream();
  if (binary_) {
    out.write(kBinaryMagic, sizeof kBinaryMagic);
    out.write(reinterpret_cast<const char*>(&header.provenance.digest), sizeof(std::uint64_t));
    out.write(reinterpret_cast<const char*>(&header.provenance.seed), sizeof(std::uint64_t));
    out.write(reinterpret_cast<const char*>(&header.duration_s), sizeof(double));
  } else {
    out << "# haloscope click stream v1\n";
    write_provenance(out, header.provenance);
    char buf[64];
    std::snprintf(buf, sizeof buf, "# duration_s %.9f\n", header.duration_s);
    out << buf << "# t_s label phase\n";
  }
}

void StreamWriter::write(const ClickRecord& click) {
  std::ofstream& out = file_.stream();
  if (binary_) {
    const auto label = static_cast<std::int8_t>(click.label);
    const auto phase = static_cast<std::uint8_t>(click.phase == Phase::kOn ? 1 : 0);
    out.write(reinterpret_cast<const char*>(&click.t), sizeof(double));
    out.write(reinterpret_cast<const char*>(&label), 1);
    out.write(reinterpret_cast<const char*>(&phase), 1);
  } else {
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.9f %d %s\n", click.t, click.label, to_string(click.phase));
    out.write(buf, n);
  }
  ++count_;
}

void StreamWriter::commit() { file_.commit(); }

StreamHeader read_stream(const std::string& path, const std::function<void(const ClickRecord&)>& sink) {
  StreamHeader header;
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw io_error(path, "cannot open for reading");
    char magic[sizeof kBinaryMagic] = {};
    probe.read(magic, sizeof magic);
    if (probe.gcount() == sizeof magic && std::memcmp(magic, kBinaryMagic, sizeof magic) == 0) {
      header.binary = true;
      probe.read(reinterpret_cast<char*>(&header.provenance.digest), sizeof(std::uint64_t));
      probe.read(reinterpret_cast<char*>(&header.provenance.seed), sizeof(std::uint64_t));
      probe.read(reinterpret_cast<char*>(&header.duration_s), sizeof(double));
      if (!probe) throw io_error(path, "truncated binary header");
      while (true) {
        ClickRecord c;
        std::int8_t label = 0;
        std::uint8_t phase = 0;
        probe.read(reinterpret_cast<char*>(&c.t), sizeof(double));
        if (probe.gcount() == 0) break;
        probe.read(reinterpret_cast<char*>(&label), 1);
        probe.read(reinterpret_cast<char*>(&phase), 1);
        if (!probe) throw io_error(path, "truncated binary record");
        c.label = label;
        c.phase = phase ? Phase::kOn : Phase::kOff;
        sink(c);
      }
      return header;
    }
  }
  std::ifstream in = open_text(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_header_line(line, header.provenance, &header.duration_s);
      continue;
    }
    const auto tokens = split_ws(line);
    if (tokens.size() != 3) throw io_error(path, "line " + std::to_string(line_no) + ": expected 3 columns");
    ClickRecord c;
    c.t = parse_number<double>(tokens[0], path, line_no);
    c.label = parse_number<int>(tokens[1], path, line_no);
    c.phase = parse_phase(tokens[2], path, line_no);
    sink(c);
  }
  return header;
}

void write_stream(const std::string& path, const ClickStream& stream, const StreamHeader& header) {
  StreamWriter writer(path, header);
  for (const ClickRecord& c : stream.clicks) writer.write(c);
  writer.commit();
}

ClickStream load_stream(const std::string& path, StreamHeader* header) {
  ClickStream stream;
  const StreamHeader h = read_stream(path, [&](const ClickRecord& c) { stream.clicks.push_back(c); });
  stream.seed = h.provenance.seed;
  stream.duration_s = h.duration_s;
  if (header != nullptr) *header = h;
  return stream;
}

void write_schedule(const std::string& path, const ProtocolSchedule& schedule, const Provenance& provenance) {
  AtomicFile file(path);
  std::ofstream& out = file.stream();
  out << "# haloscope schedule v1\n";
  write_provenance(out, provenance);
  out << "# blocks " << schedule.size() << "\n# start_s duration_s label phase kind nu_c_hz\n";
  char buf[160];
  schedule.for_each_block([&](const Block& b) {
    const int n = std::snprintf(buf, sizeof buf, "%.9f %.9f %d %s %s %.3f\n", b.start_s, b.duration_s, b.label,
                                to_string(b.phase), to_string(b.kind), schedule.nu_c(b.start_s));
    out.write(buf, n);
  });
  file.commit();
}

std::string verify_schedule(const std::string& path, const ProtocolSchedule& expected, Provenance* provenance) {
  std::ifstream in = open_text(path);
  Provenance prov;
  std::string line;
  std::size_t line_no = 0;
  std::size_t index = 0;
  std::ostringstream problem;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_header_line(line, prov, nullptr);
      continue;
    }
    const auto tokens = split_ws(line);
    if (tokens.size() != 6) throw io_error(path, "line " + std::to_string(line_no) + ": expected 6 columns");
    if (index >= expected.size()) {
      problem << "schedule file has more blocks than the configuration (" << expected.size() << ")";
      break;
    }
    const Block b = expected.block(index);
    const double start = parse_number<double>(tokens[0], path, line_no);
    const double duration = parse_number<double>(tokens[1], path, line_no);
    const int label = parse_number<int>(tokens[2], path, line_no);
    const Phase phase = parse_phase(tokens[3], path, line_no);
    const BlockKind kind = parse_kind(tokens[4], path, line_no);
    const double nu = parse_number<double>(tokens[5], path, line_no);
    if (std::abs(start - b.start_s) > 1e-6 || std::abs(duration - b.duration_s) > 1e-6 || label != b.label ||
        phase != b.phase || kind != b.kind || std::abs(nu - expected.nu_c(b.start_s)) > 1e-2) {
      problem << "block " << index << " (line " << line_no << ") differs from the configured schedule";
      break;
    }
    ++index;
  }
  if (problem.str().empty() && index != expected.size()) {
    problem << "schedule file has " << index << " blocks, the configuration " << expected.size();
  }
  if (provenance != nullptr) *provenance = prov;
  return problem.str();
}

void write_windows(const std::string& path, const std::vector<CountWindow>& windows, const Provenance& provenance) {
  AtomicFile file(path);
  std::ofstream& out = file.stream();
  out << "# haloscope count windows v1\n";
  write_provenance(out, provenance);
  out << "# cycle start_s duration_s sideband_s nu_c_hz n_c n_b n_on\n";
  char buf[200];
  for (const CountWindow& w : windows) {
    const int n = std::snprintf(buf, sizeof buf, "%lld %.9f %.9f %.9f %.3f %lld %lld %lld\n",
                                static_cast<long long>(w.cycle), w.start_s, w.duration_s, w.sideband_s, w.nu_c_hz,
                                static_cast<long long>(w.n_c), static_cast<long long>(w.n_b),
                                static_cast<long long>(w.n_on));
    out.write(buf, n);
  }
  file.commit();
}

std::vector<CountWindow> read_windows(const std::string& path, Provenance* provenance) {
  std::ifstream in = open_text(path);
  Provenance prov;
  std::vector<CountWindow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_header_line(line, prov, nullptr);
      continue;
    }
    const auto t = split_ws(line);
    if (t.size() != 8) throw io_error(path, "line " + std::to_string(line_no) + ": expected 8 columns");
    CountWindow w;
    w.cycle = parse_number<std::int64_t>(t[0], path, line_no);
    w.start_s = parse_number<double>(t[1], path, line_no);
    w.duration_s = parse_number<double>(t[2], path, line_no);
    w.sideband_s = parse_number<double>(t[3], path, line_no);
    w.nu_c_hz = parse_number<double>(t[4], path, line_no);
    w.n_c = parse_number<std::int64_t>(t[5], path, line_no);
    w.n_b = parse_number<std::int64_t>(t[6], path, line_no);
    w.n_on = parse_number<std::int64_t>(t[7], path, line_no);
    out.push_back(w);
  }
  if (provenance != nullptr) *provenance = prov;
  return out;
}

void write_exclusion(const std::string& path, const ExclusionResult& result, const Provenance& provenance) {
  AtomicFile file(path);
  std::ofstream& out = file.stream();
  out << "# haloscope exclusion v1\n";
  write_provenance(out, provenance);
  char buf[400];
  std::snprintf(buf, sizeof buf, "# linewidth_hz %.3f\n# scan_speed_mhz_per_day %.6f\n", result.linewidth_hz,
                result.scan_speed_mhz_per_day);
  out << buf;
  out << "# nu_Hz m_a_eV N95 P95_W g_limit_GeVinv CL n_c n_b S max_S discovery N95_continuous windows\n";
  for (const ExclusionPoint& p : result.points) {
    const int n = std::snprintf(buf, sizeof buf, "%.3f %.9e %lld %.6e %.6e %.4f %lld %lld %.4f %.4f %d %.3f %zu\n",
                                p.nu_hz, p.m_a_ev, static_cast<long long>(p.n95), p.p95_w, p.g_limit, p.confidence,
                                static_cast<long long>(p.n_c), static_cast<long long>(p.n_b), p.s, p.max_s,
                                p.discovery ? 1 : 0, p.n95_continuous, p.windows);
    out.write(buf, n);
  }
  file.commit();
}

std::vector<RamseyObservation> read_observations(const std::string& path) {
  std::ifstream in = open_text(path);
  std::vector<RamseyObservation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto t = split_ws(line);
    if (t.empty()) continue;
    if (t.size() != 5) throw io_error(path, "line " + std::to_string(line_no) + ": expected 5 columns");
    RamseyObservation o;
    o.delta_hz = parse_number<double>(t[0], path, line_no);
    o.delta_omega = parse_number<double>(t[1], path, line_no);
    o.delta_gamma = parse_number<double>(t[2], path, line_no);
    o.sigma_omega = parse_number<double>(t[3], path, line_no);
    o.sigma_gamma = parse_number<double>(t[4], path, line_no);
    out.push_back(o);
  }
  return out;
}

void write_observations(const std::string& path, const std::vector<RamseyObservation>& obs) {
  AtomicFile file(path);
  std::ofstream& out = file.stream();
  out << "# delta_Hz domega_Hz dgamma_Hz err_domega err_dgamma\n";
  char buf[200];
  for (const RamseyObservation& o : obs) {
    const int n = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f\n", o.delta_hz, o.delta_omega,
                                o.delta_gamma, o.sigma_omega, o.sigma_gamma);
    out.write(buf, n);
  }
  file.commit();
}

void read_spectroscopy(const std::string& path, std::vector<double>& freq_hz, std::vector<double>& counts) {
  std::ifstream in = open_text(path);
  freq_hz.clear();
  counts.clear();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto t = split_ws(line);
    if (t.empty()) continue;
    if (t.size() != 2) throw io_error(path, "line " + std::to_string(line_no) + ": expected 2 columns");
    freq_hz.push_back(parse_number<double>(t[0], path, line_no));
    counts.push_back(parse_number<double>(t[1], path, line_no));
  }
}

Provenance read_text_provenance(const std::string& path) {
  std::ifstream in = open_text(path);
  Provenance prov;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] != '#') break;
    parse_header_line(line, prov, nullptr);
  }
  return prov;
}

}  // namespace haloscope

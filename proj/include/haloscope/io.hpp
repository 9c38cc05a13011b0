#pragma once

// File formats. Every writer goes through AtomicFile (temp file + rename) and
// stamps the config digest and seed into its header.

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "haloscope/analysis.hpp"
#include "haloscope/calibration.hpp"
#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

namespace haloscope {

class AtomicFile {
 public:
  /// Throws std::runtime_error when the temporary file cannot be created.
  AtomicFile(std::string path, bool binary = false);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ofstream& stream() { return out_; }
  void commit();

 private:
  std::string path_;
  std::string temp_;
  std::ofstream out_;
  bool committed_ = false;
};

struct Provenance {
  std::uint64_t digest = 0;
  std::uint64_t seed = 0;
};

struct StreamHeader {
  Provenance provenance;
  double duration_s = 0.0;
  bool binary = false;
};

/// Streaming click writer, text (`t label phase`, t with 9 decimals) or a
/// compact binary record format with identical content.
class StreamWriter {
 public:
  StreamWriter(const std::string& path, const StreamHeader& header);
  void write(const ClickRecord& click);
  void commit();
  std::int64_t count() const { return count_; }

 private:
  AtomicFile file_;
  bool binary_;
  std::int64_t count_ = 0;
};

/// Read a stream in either format, handing each click to `sink`.
StreamHeader read_stream(const std::string& path, const std::function<void(const ClickRecord&)>& sink);

void write_stream(const std::string& path, const ClickStream& stream, const StreamHeader& header);
ClickStream load_stream(const std::string& path, StreamHeader* header = nullptr);

/// Block table: start, duration, label, phase, kind, nu_c.
void write_schedule(const std::string& path, const ProtocolSchedule& schedule, const Provenance& provenance);

/// Compare a schedule file with `expected` block by block. Returns an empty
/// string when they agree, otherwise a description of the first mismatch.
std::string verify_schedule(const std::string& path, const ProtocolSchedule& expected, Provenance* provenance = nullptr);

void write_windows(const std::string& path, const std::vector<CountWindow>& windows, const Provenance& provenance);
std::vector<CountWindow> read_windows(const std::string& path, Provenance* provenance = nullptr);

void write_exclusion(const std::string& path, const ExclusionResult& result, const Provenance& provenance);

/// Five columns: delta_Hz domega_Hz dgamma_Hz err_domega err_dgamma.
std::vector<RamseyObservation> read_observations(const std::string& path);
void write_observations(const std::string& path, const std::vector<RamseyObservation>& obs);

/// Two columns: frequency_Hz counts.
void read_spectroscopy(const std::string& path, std::vector<double>& freq_hz, std::vector<double>& counts);

/// Header-comment provenance lines, "# digest <hex>" and "# seed <n>".
Provenance read_text_provenance(const std::string& path);

}  // namespace haloscope

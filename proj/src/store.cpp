#include "clinex/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace clinex {

using nlohmann::json;

json to_json(const ExtractionRecord& r) {
  json j = {{"report_id", r.report_id},
            {"config_hash", r.config_hash},
            {"raw_output", r.raw_output},
            {"parsed", to_json(r.parsed)},
            {"rag_used", r.rag_used},
            {"rerank_score", r.rerank_score ? json(*r.rerank_score) : json(nullptr)},
            {"latency_ms", r.latency_ms}};
  if (r.timestamp) j["timestamp"] = *r.timestamp;
  if (r.error) j["error"] = *r.error;
  return j;
}

ExtractionRecord extraction_record_from_json(const json& j) {
  try {
    ExtractionRecord r;
    r.report_id = j.at("report_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.raw_output = j.at("raw_output").get<std::string>();
    r.parsed = parsed_label_from_json(j.at("parsed"));
    r.rag_used = j.at("rag_used").get<bool>();
    if (j.contains("rerank_score") && !j.at("rerank_score").is_null())
      r.rerank_score = j.at("rerank_score").get<double>();
    r.latency_ms = j.at("latency_ms").get<double>();
    if (j.contains("timestamp")) r.timestamp = j.at("timestamp").get<std::string>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed extraction record: ") + e.what());
  }
}

bool same_outcome(const ExtractionRecord& a, const ExtractionRecord& b) {
  return a.report_id == b.report_id && a.config_hash == b.config_hash && a.raw_output == b.raw_output &&
         a.parsed == b.parsed && a.rag_used == b.rag_used && a.rerank_score == b.rerank_score &&
         a.error == b.error;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Scan {
  std::vector<ExtractionRecord> records;
  std::set<RecordKey> keys;
  /// Length of the prefix made of complete lines.
  std::size_t complete_bytes = 0;
};

Scan scan_store(const std::filesystem::path& path, std::string_view content) {
  Scan scan;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) break;  // torn tail
    ++line_no;
    const auto line = content.substr(pos, nl - pos);
    pos = nl + 1;
    scan.complete_bytes = pos;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError(path.string() + ": corrupt record on line " + std::to_string(line_no));
    ExtractionRecord r;
    try {
      r = extraction_record_from_json(j);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!scan.keys.emplace(r.report_id, r.config_hash).second)
      throw DataError(path.string() + ": duplicate record for report " + r.report_id + " and config " +
                      r.config_hash + " on line " + std::to_string(line_no));
    scan.records.push_back(std::move(r));
  }
  return scan;
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw DataError(what + ": " + std::strerror(errno));
}

}  // namespace

ResultStore::ResultStore(std::filesystem::path path) : path_(std::move(path)) {
  std::string content;
  if (std::filesystem::exists(path_)) content = read_file(path_);
  Scan scan = scan_store(path_, content);
  records_ = std::move(scan.records);
  keys_ = std::move(scan.keys);

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("cannot open result store " + path_.string());
  if (scan.complete_bytes < content.size()) {
    repaired_bytes_ = content.size() - scan.complete_bytes;
    if (::ftruncate(fd_, static_cast<off_t>(scan.complete_bytes)) != 0)
      throw_errno("cannot truncate torn tail of " + path_.string());
    ::fsync(fd_);
  }
}

ResultStore::~ResultStore() {
  if (fd_ >= 0) ::close(fd_);
}

bool ResultStore::contains(const std::string& report_id, const std::string& config_hash) const {
  return keys_.count({report_id, config_hash}) > 0;
}

void ResultStore::append(const ExtractionRecord& record) {
  if (!keys_.emplace(record.report_id, record.config_hash).second)
    throw DataError("refusing duplicate record for report " + record.report_id + " and config " +
                    record.config_hash);
  const std::string line = to_json(record).dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      keys_.erase({record.report_id, record.config_hash});
      throw_errno("cannot append to " + path_.string());
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw_errno("cannot sync " + path_.string());
  records_.push_back(record);
}

std::vector<ExtractionRecord> load_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("result store " + path.string() + " does not exist");
  const std::string content = read_file(path);
  return scan_store(path, content).records;
}

std::filesystem::path config_registry_path(const std::filesystem::path& store) {
  auto p = store;
  p += ".configs.json";
  return p;
}

std::vector<PipelineConfig> load_config_registry(const std::filesystem::path& store) {
  const auto path = config_registry_path(store);
  if (!std::filesystem::exists(path)) return {};
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw DataError(path.string() + " is not a JSON array");
  std::vector<PipelineConfig> out;
  for (const auto& c : j) {
    try {
      out.push_back(pipeline_config_from_json(c));
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void register_configs(const std::filesystem::path& store, const std::vector<PipelineConfig>& configs) {
  std::vector<PipelineConfig> merged = load_config_registry(store);
  std::set<std::string> known;
  for (const auto& c : merged) known.insert(config_hash(c));
  bool changed = false;
  for (const auto& c : configs)
    if (known.insert(config_hash(c)).second) {
      merged.push_back(c);
      changed = true;
    }
  if (!changed && std::filesystem::exists(config_registry_path(store))) return;

  json out = json::array();
  for (const auto& c : merged) out.push_back(to_json(c));
  const auto path = config_registry_path(store);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f << out.dump(2) << '\n';
    if (!f.flush()) throw DataError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace clinex

#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cityprobe/prompting.hpp"

namespace cityprobe {

struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "gpt-4o";
  double temperature = 0.01;
  int max_tokens = 512;
  std::string api_key_env = "CITYPROBE_API_KEY";
  double timeout_seconds = 60.0;
  int max_parallel = 4;
  int retries = 3;
  double backoff_base_seconds = 1.0;  // 1s, 2s, 4s, ...
};

enum class QueryMode { live, replay, record };

QueryMode query_mode_from_flag(const std::string& flag);
std::string_view to_string(QueryMode mode);

/// One LLM exchange. `fingerprint` is a pure function of
/// (model_name, temperature, prompt text, repeat_index), so repeated runs
/// of the same experiment replay from the store byte-for-byte.
struct QueryRecord {
  std::string fingerprint;
  std::string prompt;
  std::string raw_response;
  std::string provider;
  std::string timestamp;
  int repeat_index = 0;
};

std::string request_fingerprint(const std::string& model_name, double temperature,
                                const std::string& prompt_text, int repeat_index);

/// Append-only JSONL cache of QueryRecords, one object per line, at most
/// one record per fingerprint. Appends are serialized internally, so the
/// store is safe to share across the gateway's worker threads.
class RecordStore {
 public:
  RecordStore() = default;
  explicit RecordStore(std::string path);

  const std::string& path() const { return path_; }
  size_t size() const;
  std::optional<QueryRecord> find(const std::string& fingerprint) const;

  /// Returns false (and writes nothing) when the fingerprint is already
  /// present.
  bool append(const QueryRecord& record);

  std::vector<QueryRecord> all() const;

 private:
  void load();

  std::string path_;
  mutable std::mutex mutex_;
  std::vector<QueryRecord> records_;
  std::unordered_map<std::string, size_t> index_;
};

/// Executes one prompt.
///  live:   HTTP POST to the chat-completion endpoint, 429/5xx retried
///          with exponential backoff; the store is not consulted.
///  record: answer from the store when present, otherwise as live followed
///          by an append.
///  replay: answer from the store; a missing fingerprint is ReplayMiss and
///          the network is never touched.
QueryRecord query(const RenderedPrompt& prompt, const ProviderConfig& cfg,
                  RecordStore* store, QueryMode mode, int repeat_index = 0);

/// n records with repeat_index 0..n-1, at most cfg.max_parallel in flight,
/// returned ordered by repeat_index regardless of completion order.
std::vector<QueryRecord> query_repeated(const RenderedPrompt& prompt, int n,
                                        const ProviderConfig& cfg, RecordStore* store,
                                        QueryMode mode);

}  // namespace cityprobe

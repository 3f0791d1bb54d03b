#pragma once

// Annotation service state: item sampling, quiz gating, paged judgments
// with embedded controls, running-accuracy disqualification, aggregation and
// an append-only event log that rebuilds state on replay.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advtext/attacks.hpp"
#include "advtext/corpus.hpp"

namespace advtext::humaneval {

// Request refused because of who is asking or what state they are in.
class RejectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Request does not fit the session's current state.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough items left to serve the request.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Paraphrase { kYes, kSomewhatYes, kNo };
enum class Naturalness { kVeryUnnatural, kSomewhatNatural, kNatural };
enum class Sentiment { kPositive, kNegative, kCannotTell };

std::string to_string(Paraphrase v);
std::string to_string(Naturalness v);
std::string to_string(Sentiment v);
Paraphrase parse_paraphrase(std::string_view s);
Naturalness parse_naturalness(std::string_view s);
Sentiment parse_sentiment(std::string_view s);

// Exact option strings, in display order.
const std::vector<std::string>& paraphrase_options();
const std::vector<std::string>& naturalness_options();
const std::vector<std::string>& sentiment_options();

struct Answers {
  std::optional<Paraphrase> q1;  // absent for baseline items
  Naturalness q2 = Naturalness::kNatural;
  Sentiment q3 = Sentiment::kCannotTell;
  bool operator==(const Answers&) const = default;
};

struct AnnotationItem {
  std::string id;
  std::string method;     // "baseline" for unperturbed originals
  std::string threshold;  // empty for baseline items
  std::optional<std::string> original_text;
  std::string adversarial_text;
  Label original_label = Label::kNegative;
  bool is_control = false;
  std::optional<Answers> gold_answers;
  bool is_baseline_original = false;

  // Throws ContractError when an invariant is broken.
  void validate() const;
};

nlohmann::json to_json(const Answers& a);
Answers answers_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnnotationItem& item);
AnnotationItem item_from_json(const nlohmann::json& j);
// Worker-facing view: no control flag or gold answers.
nlohmann::json public_view(const AnnotationItem& item);

std::vector<AnnotationItem> read_items(const std::filesystem::path& path);
void write_items(const std::filesystem::path& path, std::span<const AnnotationItem> items);

struct SampleCell {
  std::string method;
  std::string threshold;
  std::vector<attacks::AttackResult> results;
};

struct SamplingOptions {
  std::size_t per_direction = 25;
  double control_fraction = 0.1;
  std::size_t n_baseline = 50;
  std::uint64_t seed = 0;
};

// Balanced successful attacks per cell, a ceil(control_fraction) share of
// each cell flagged as controls, plus baseline originals (questions 2 and 3
// only). Control gold answers are filled from `gold` when present there.
// Throws ContractError naming the cell when its pool is too small.
std::vector<AnnotationItem> sample_items(std::span<const SampleCell> cells,
                                         std::span<const corpus::Example> baseline_pool,
                                         const SamplingOptions& options,
                                         const std::map<std::string, Answers>& gold = {});

enum class SessionState { kQuiz, kActive, kDisqualified, kFinished };
std::string to_string(SessionState s);

struct WorkerSession {
  std::string worker_id;
  std::string locale;
  std::string token;
  SessionState state = SessionState::kQuiz;
  std::optional<double> quiz_score;
  std::vector<std::string> quiz_ids;
  std::set<std::string> served_control_ids;
  std::set<std::string> served_item_ids;
  std::vector<std::string> current_page;  // outstanding page, empty when none
  std::size_t pages_served = 0;
  std::size_t pages_submitted = 0;
  std::size_t control_correct = 0;
  std::size_t control_total = 0;

  double control_accuracy() const;
};

struct ServiceConfig {
  std::string host = "0.0.0.0";
  std::uint16_t port = 8080;
  std::vector<std::string> locales{"US", "UK", "AU", "CA"};
  std::filesystem::path data_dir = "humaneval-data";
  std::filesystem::path static_dir;
  std::uint64_t seed = 0;
  std::string admin_token;
  std::size_t quiz_size = 10;
  std::size_t page_size = 10;
  double min_accuracy = 0.8;
};

// JSON config file (optional) overlaid with HUMANEVAL_PORT, HUMANEVAL_LOCALES
// (comma separated), HUMANEVAL_DATA_DIR, HUMANEVAL_SEED and
// HUMANEVAL_ADMIN_TOKEN. `getenv` is injectable for tests.
ServiceConfig load_config(const std::optional<std::filesystem::path>& path,
                          const std::function<const char*(const char*)>& getenv = nullptr);

struct OptionShares {
  std::map<std::string, double> percent;  // option string -> percentage
  std::size_t n = 0;
};

struct CellAggregate {
  std::string method;
  std::string threshold;
  std::optional<OptionShares> q1;
  OptionShares q2;
  OptionShares q3;
  OptionShares q3_consistency;  // consistent / flipped / cannot-tell
};

struct Aggregate {
  std::vector<CellAggregate> cells;
};
nlohmann::json to_json(const Aggregate& a);

// Milliseconds since the epoch.
using Clock = std::function<std::int64_t()>;
Clock system_clock();

class Service {
 public:
  // Replays `log_path` when it exists and appends new events to it. An empty
  // path keeps the log in memory only.
  Service(std::vector<AnnotationItem> items, ServiceConfig config, std::filesystem::path log_path = {},
          Clock clock = system_clock());

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }

  // Opens a quiz of quiz_size unseen controls and returns the new session.
  WorkerSession start_session(const std::string& worker_id, const std::string& locale);
  std::vector<AnnotationItem> quiz(const std::string& worker_id) const;
  SessionState submit_quiz(const std::string& worker_id, const std::map<std::string, Answers>& answers);
  // The outstanding page, or a new one. Empty when the worker has finished.
  std::vector<AnnotationItem> next_page(const std::string& worker_id);
  // With `page_index`, resubmitting an already accepted page is a no-op.
  SessionState submit_page(const std::string& worker_id, const std::map<std::string, Answers>& answers,
                           std::optional<std::size_t> page_index = std::nullopt);

  WorkerSession session(const std::string& worker_id) const;
  // Throws RejectedError unless `token` matches the worker's session.
  void check_token(const std::string& worker_id, const std::string& token) const;
  Aggregate aggregate() const;

  const AnnotationItem& item(const std::string& id) const;
  std::size_t control_count() const;

  // Every event applied so far, in order.
  std::vector<nlohmann::json> events() const;

 private:
  struct StoredAnswer {
    std::string worker_id;
    std::string item_id;
    Answers answers;
    std::int64_t timestamp = 0;
  };

  void apply(const nlohmann::json& event);
  void record(nlohmann::json event);
  WorkerSession& find(const std::string& worker_id);
  const WorkerSession& find(const std::string& worker_id) const;
  void check_answers(const std::vector<std::string>& served, const std::map<std::string, Answers>& answers) const;
  std::uint64_t worker_seed(const std::string& worker_id, std::uint64_t salt) const;

  ServiceConfig config_;
  Clock clock_;
  std::vector<AnnotationItem> items_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> control_ids_;
  std::vector<std::string> task_ids_;
  std::map<std::string, WorkerSession> sessions_;
  std::vector<StoredAnswer> answers_;
  std::vector<nlohmann::json> events_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  mutable std::shared_mutex mutex_;
};

}  // namespace advtext::humaneval

#include "advtext/humaneval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <random>
#include <sstream>

#include "advtext/errors.hpp"

namespace advtext::humaneval {

using nlohmann::json;

namespace {

const std::vector<std::string> kParaphrase{"Yes", "Somewhat yes", "No"};
const std::vector<std::string> kNaturalness{"Very unnatural", "Somewhat natural", "Natural"};
const std::vector<std::string> kSentiment{"Positive", "Negative", "Cannot tell"};

template <typename E>
E parse_option(const std::vector<std::string>& options, std::string_view s, const char* question) {
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i] == s) return static_cast<E>(i);
  }
  throw ContractError(std::string("invalid option '") + std::string(s) + "' for " + question);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

json answers_map_to_json(const std::map<std::string, Answers>& answers) {
  json j = json::object();
  for (const auto& [id, a] : answers) j[id] = to_json(a);
  return j;
}

std::map<std::string, Answers> answers_map_from_json(const json& j) {
  std::map<std::string, Answers> out;
  for (const auto& [id, a] : j.items()) out.emplace(id, answers_from_json(a));
  return out;
}

std::string random_token() {
  std::random_device device;
  std::ostringstream out;
  out << std::hex;
  for (int i = 0; i < 4; ++i) out << device();
  return out.str();
}

}  // namespace

std::string to_string(Paraphrase v) { return kParaphrase[static_cast<std::size_t>(v)]; }
std::string to_string(Naturalness v) { return kNaturalness[static_cast<std::size_t>(v)]; }
std::string to_string(Sentiment v) { return kSentiment[static_cast<std::size_t>(v)]; }
Paraphrase parse_paraphrase(std::string_view s) { return parse_option<Paraphrase>(kParaphrase, s, "q1"); }
Naturalness parse_naturalness(std::string_view s) { return parse_option<Naturalness>(kNaturalness, s, "q2"); }
Sentiment parse_sentiment(std::string_view s) { return parse_option<Sentiment>(kSentiment, s, "q3"); }
const std::vector<std::string>& paraphrase_options() { return kParaphrase; }
const std::vector<std::string>& naturalness_options() { return kNaturalness; }
const std::vector<std::string>& sentiment_options() { return kSentiment; }

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::kQuiz: return "quiz";
    case SessionState::kActive: return "active";
    case SessionState::kDisqualified: return "disqualified";
    case SessionState::kFinished: return "finished";
  }
  return "?";
}

void AnnotationItem::validate() const {
  if (id.empty()) throw ContractError("annotation item without an id");
  if (is_control && !gold_answers) throw ContractError("control item '" + id + "' has no gold answers");
  if (gold_answers && gold_answers->q1.has_value() == is_baseline_original) {
    throw ContractError("gold answers of item '" + id + "' do not match its question set");
  }
  if (!is_baseline_original && !original_text) throw ContractError("item '" + id + "' needs the original text");
}

json to_json(const Answers& a) {
  json j{{"q2", to_string(a.q2)}, {"q3", to_string(a.q3)}};
  j["q1"] = a.q1 ? json(to_string(*a.q1)) : json(nullptr);
  return j;
}

Answers answers_from_json(const json& j) {
  if (!j.is_object()) throw ContractError("answers must be a JSON object");
  Answers a;
  if (j.contains("q1") && !j.at("q1").is_null()) {
    if (!j.at("q1").is_string()) throw ContractError("q1 must be a string");
    a.q1 = parse_paraphrase(j.at("q1").get<std::string>());
  }
  if (!j.contains("q2") || !j.at("q2").is_string()) throw ContractError("q2 answer missing");
  if (!j.contains("q3") || !j.at("q3").is_string()) throw ContractError("q3 answer missing");
  a.q2 = parse_naturalness(j.at("q2").get<std::string>());
  a.q3 = parse_sentiment(j.at("q3").get<std::string>());
  return a;
}

json to_json(const AnnotationItem& item) {
  return json{{"id", item.id},
              {"method", item.method},
              {"threshold", item.threshold},
              {"original_text", item.original_text ? json(*item.original_text) : json(nullptr)},
              {"adversarial_text", item.adversarial_text},
              {"original_label", to_string(item.original_label)},
              {"is_control", item.is_control},
              {"gold_answers", item.gold_answers ? to_json(*item.gold_answers) : json(nullptr)},
              {"is_baseline_original", item.is_baseline_original}};
}

AnnotationItem item_from_json(const json& j) {
  try {
    AnnotationItem item;
    item.id = j.at("id").get<std::string>();
    item.method = j.at("method").get<std::string>();
    item.threshold = j.value("threshold", std::string());
    if (j.contains("original_text") && !j.at("original_text").is_null()) {
      item.original_text = j.at("original_text").get<std::string>();
    }
    item.adversarial_text = j.at("adversarial_text").get<std::string>();
    item.original_label = parse_label(j.at("original_label").get<std::string>());
    item.is_control = j.value("is_control", false);
    if (j.contains("gold_answers") && !j.at("gold_answers").is_null()) {
      item.gold_answers = answers_from_json(j.at("gold_answers"));
    }
    item.is_baseline_original = j.value("is_baseline_original", false);
    return item;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed annotation item: ") + e.what());
  }
}

json public_view(const AnnotationItem& item) {
  json j{{"id", item.id}, {"adversarial_text", item.adversarial_text}};
  if (item.is_baseline_original) {
    j["questions"] = {"q2", "q3"};
  } else {
    j["questions"] = {"q1", "q2", "q3"};
    j["original_text"] = *item.original_text;
  }
  return j;
}

std::vector<AnnotationItem> read_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<AnnotationItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(item_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

void write_items(const std::filesystem::path& path, std::span<const AnnotationItem> items) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const AnnotationItem& item : items) out << to_json(item).dump() << '\n';
}

std::vector<AnnotationItem> sample_items(std::span<const SampleCell> cells,
                                         std::span<const corpus::Example> baseline_pool,
                                         const SamplingOptions& options,
                                         const std::map<std::string, Answers>& gold) {
  std::vector<AnnotationItem> items;
  for (const SampleCell& cell : cells) {
    const std::string name = cell.method + "/" + cell.threshold;
    std::mt19937_64 rng(options.seed ^ fnv1a(name));
    std::vector<const attacks::AttackResult*> to_negative, to_positive;
    for (const attacks::AttackResult& r : cell.results) {
      if (!r.success || !r.attacked) continue;
      (r.label_before == Label::kPositive ? to_negative : to_positive).push_back(&r);
    }
    if (to_negative.size() < options.per_direction || to_positive.size() < options.per_direction) {
      throw ContractError("cell " + name + ": need " + std::to_string(options.per_direction) +
                          " successful attacks per direction, have " + std::to_string(to_negative.size()) +
                          " positive-to-negative and " + std::to_string(to_positive.size()) +
                          " negative-to-positive");
    }
    shuffle(to_negative, rng);
    shuffle(to_positive, rng);
    std::vector<const attacks::AttackResult*> chosen(to_negative.begin(),
                                                     to_negative.begin() + static_cast<std::ptrdiff_t>(options.per_direction));
    chosen.insert(chosen.end(), to_positive.begin(),
                  to_positive.begin() + static_cast<std::ptrdiff_t>(options.per_direction));
    const auto n_controls = static_cast<std::size_t>(
        std::ceil(options.control_fraction * static_cast<double>(chosen.size()) - 1e-9));
    std::vector<std::size_t> order(chosen.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    std::vector<bool> control(chosen.size(), false);
    for (std::size_t i = 0; i < n_controls && i < order.size(); ++i) control[order[i]] = true;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const attacks::AttackResult& r = *chosen[i];
      AnnotationItem item;
      item.id = cell.method + "-" + cell.threshold + "-" + r.id;
      item.method = cell.method;
      item.threshold = cell.threshold;
      item.original_text = join(r.original);
      item.adversarial_text = join(r.adversarial);
      item.original_label = r.original_label;
      item.is_control = control[i];
      if (const auto it = gold.find(item.id); item.is_control && it != gold.end()) item.gold_answers = it->second;
      items.push_back(std::move(item));
    }
  }
  if (options.n_baseline > 0) {
    if (baseline_pool.size() < options.n_baseline) {
      throw ContractError("baseline pool has " + std::to_string(baseline_pool.size()) + " examples, need " +
                          std::to_string(options.n_baseline));
    }
    std::mt19937_64 rng(options.seed ^ fnv1a("baseline"));
    std::vector<std::size_t> order(baseline_pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t i = 0; i < options.n_baseline; ++i) {
      const corpus::Example& e = baseline_pool[order[i]];
      AnnotationItem item;
      item.id = "baseline-" + e.id;
      item.method = "baseline";
      item.adversarial_text = join(e.tokens);
      item.original_label = e.label;
      item.is_baseline_original = true;
      items.push_back(std::move(item));
    }
  }
  return items;
}

double WorkerSession::control_accuracy() const {
  return control_total == 0 ? 1.0 : static_cast<double>(control_correct) / static_cast<double>(control_total);
}

ServiceConfig load_config(const std::optional<std::filesystem::path>& path,
                          const std::function<const char*(const char*)>& getenv) {
  ServiceConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw FormatError("cannot open config " + path->string());
    json j;
    try {
      j = json::parse(in);
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      c.locales = j.value("locales", c.locales);
      c.data_dir = j.value("data_dir", c.data_dir.string());
      c.static_dir = j.value("static_dir", c.static_dir.string());
      c.seed = j.value("seed", c.seed);
      c.admin_token = j.value("admin_token", c.admin_token);
      c.quiz_size = j.value("quiz_size", c.quiz_size);
      c.page_size = j.value("page_size", c.page_size);
      c.min_accuracy = j.value("min_accuracy", c.min_accuracy);
    } catch (const json::exception& e) {
      throw FormatError("invalid config " + path->string() + ": " + e.what());
    }
    if (c.data_dir.is_relative()) c.data_dir = path->parent_path() / c.data_dir;
    if (!c.static_dir.empty() && c.static_dir.is_relative()) c.static_dir = path->parent_path() / c.static_dir;
  }
  const auto env = [&](const char* name) -> const char* { return getenv ? getenv(name) : std::getenv(name); };
  try {
    if (const char* v = env("HUMANEVAL_PORT")) c.port = static_cast<std::uint16_t>(std::stoul(v));
    if (const char* v = env("HUMANEVAL_SEED")) c.seed = std::stoull(v);
  } catch (const std::exception&) {
    throw FormatError("HUMANEVAL_PORT and HUMANEVAL_SEED must be integers");
  }
  if (const char* v = env("HUMANEVAL_DATA_DIR")) c.data_dir = v;
  if (const char* v = env("HUMANEVAL_ADMIN_TOKEN")) c.admin_token = v;
  if (const char* v = env("HUMANEVAL_LOCALES")) {
    c.locales.clear();
    std::stringstream in(v);
    std::string part;
    while (std::getline(in, part, ',')) {
      part.erase(0, part.find_first_not_of(' '));
      part.erase(part.find_last_not_of(' ') + 1);
      if (!part.empty()) c.locales.push_back(part);
    }
  }
  if (c.quiz_size == 0 || c.page_size < 2) throw FormatError("quiz_size must be >= 1 and page_size >= 2");
  return c;
}

json to_json(const Aggregate& a) {
  const auto shares = [](const OptionShares& s) { return json{{"n", s.n}, {"percent", s.percent}}; };
  json cells = json::array();
  for (const CellAggregate& c : a.cells) {
    cells.push_back({{"method", c.method},
                     {"threshold", c.threshold},
                     {"q1", c.q1 ? shares(*c.q1) : json(nullptr)},
                     {"q2", shares(c.q2)},
                     {"q3", shares(c.q3)},
                     {"q3_consistency", shares(c.q3_consistency)}});
  }
  return json{{"cells", cells}};
}

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

Service::Service(std::vector<AnnotationItem> items, ServiceConfig config, std::filesystem::path log_path,
                 Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)), items_(std::move(items)), log_path_(std::move(log_path)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    items_[i].validate();
    if (!index_.emplace(items_[i].id, i).second) throw ContractError("duplicate item id '" + items_[i].id + "'");
    (items_[i].is_control ? control_ids_ : task_ids_).push_back(items_[i].id);
  }
  if (log_path_.empty()) return;
  if (std::filesystem::exists(log_path_)) {
    std::ifstream in(log_path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        json event = json::parse(line);
        apply(event);
        events_.push_back(std::move(event));
      } catch (const std::exception& e) {
        throw FormatError(log_path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else if (log_path_.has_parent_path()) {
    std::filesystem::create_directories(log_path_.parent_path());
  }
  log_.open(log_path_, std::ios::app);
  if (!log_) throw FormatError("cannot append to event log " + log_path_.string());
}

WorkerSession& Service::find(const std::string& worker_id) {
  const auto it = sessions_.find(worker_id);
  if (it == sessions_.end()) throw NotFoundError("no session for worker '" + worker_id + "'");
  return it->second;
}

const WorkerSession& Service::find(const std::string& worker_id) const {
  const auto it = sessions_.find(worker_id);
  if (it == sessions_.end()) throw NotFoundError("no session for worker '" + worker_id + "'");
  return it->second;
}

const AnnotationItem& Service::item(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw NotFoundError("unknown item '" + id + "'");
  return items_[it->second];
}

std::size_t Service::control_count() const { return control_ids_.size(); }

std::uint64_t Service::worker_seed(const std::string& worker_id, std::uint64_t salt) const {
  return config_.seed ^ fnv1a(worker_id) ^ (salt * 0x9e3779b97f4a7c15ULL);
}

void Service::apply(const json& event) {
  const std::string type = event.at("type").get<std::string>();
  const std::string worker = event.at("worker").get<std::string>();
  if (type == "session_started") {
    WorkerSession s;
    s.worker_id = worker;
    s.locale = event.at("locale").get<std::string>();
    s.token = event.at("token").get<std::string>();
    s.quiz_ids = event.at("quiz").get<std::vector<std::string>>();
    for (const std::string& id : s.quiz_ids) {
      if (!item(id).is_control) throw FormatError("quiz item '" + id + "' is not a control");
      s.served_control_ids.insert(id);
      s.served_item_ids.insert(id);
    }
    sessions_[worker] = std::move(s);
    return;
  }
  WorkerSession& s = find(worker);
  const std::int64_t t = event.value("t", std::int64_t{0});
  if (type == "quiz_submitted") {
    std::size_t correct = 0;
    for (const auto& [id, a] : answers_map_from_json(event.at("answers"))) {
      correct += item(id).gold_answers == a;
      answers_.push_back({worker, id, a, t});
    }
    s.control_correct += correct;
    s.control_total += s.quiz_ids.size();
    s.quiz_score = static_cast<double>(correct) / static_cast<double>(s.quiz_ids.size());
    const bool pass = static_cast<double>(correct) >= config_.min_accuracy * static_cast<double>(s.quiz_ids.size()) - 1e-9;
    s.state = pass ? SessionState::kActive : SessionState::kDisqualified;
  } else if (type == "page_served") {
    s.current_page = event.at("items").get<std::vector<std::string>>();
    for (const std::string& id : s.current_page) {
      if (item(id).is_control) s.served_control_ids.insert(id);
      s.served_item_ids.insert(id);
    }
    ++s.pages_served;
  } else if (type == "page_submitted") {
    for (const auto& [id, a] : answers_map_from_json(event.at("answers"))) {
      const AnnotationItem& it = item(id);
      if (it.is_control) {
        ++s.control_total;
        s.control_correct += it.gold_answers == a;
      }
      answers_.push_back({worker, id, a, t});
    }
    s.current_page.clear();
    ++s.pages_submitted;
    const double needed = config_.min_accuracy * static_cast<double>(s.control_total) - 1e-9;
    if (static_cast<double>(s.control_correct) < needed) s.state = SessionState::kDisqualified;
  } else if (type == "session_finished") {
    s.state = SessionState::kFinished;
  } else {
    throw FormatError("unknown event type '" + type + "'");
  }
}

void Service::record(json event) {
  event["t"] = clock_();
  apply(event);
  if (log_.is_open()) {
    log_ << event.dump() << '\n';
    log_.flush();
  }
  events_.push_back(std::move(event));
}

WorkerSession Service::start_session(const std::string& worker_id, const std::string& locale) {
  std::unique_lock lock(mutex_);
  if (worker_id.empty()) throw ContractError("worker id must not be empty");
  if (std::find(config_.locales.begin(), config_.locales.end(), locale) == config_.locales.end()) {
    throw RejectedError("locale '" + locale + "' is not accepted");
  }
  if (const auto it = sessions_.find(worker_id); it != sessions_.end()) {
    if (it->second.state == SessionState::kDisqualified) {
      throw RejectedError("worker '" + worker_id + "' is disqualified");
    }
    throw ConflictError("worker '" + worker_id + "' already has a session");
  }
  if (control_ids_.size() < config_.quiz_size) {
    throw CapacityError("only " + std::to_string(control_ids_.size()) + " controls available for a quiz of " +
                        std::to_string(config_.quiz_size));
  }
  std::vector<std::string> pool = control_ids_;
  std::mt19937_64 rng(worker_seed(worker_id, 0));
  shuffle(pool, rng);
  pool.resize(config_.quiz_size);
  record({{"type", "session_started"},
          {"worker", worker_id},
          {"locale", locale},
          {"token", random_token()},
          {"quiz", pool}});
  return sessions_.at(worker_id);
}

std::vector<AnnotationItem> Service::quiz(const std::string& worker_id) const {
  std::shared_lock lock(mutex_);
  const WorkerSession& s = find(worker_id);
  if (s.state != SessionState::kQuiz) throw ConflictError("quiz already submitted");
  std::vector<AnnotationItem> out;
  for (const std::string& id : s.quiz_ids) out.push_back(item(id));
  return out;
}

void Service::check_answers(const std::vector<std::string>& served,
                            const std::map<std::string, Answers>& answers) const {
  for (const auto& [id, a] : answers) {
    if (std::find(served.begin(), served.end(), id) == served.end()) {
      throw ContractError("answer for unserved item '" + id + "'");
    }
    const AnnotationItem& it = item(id);
    if (it.is_baseline_original && a.q1) throw ContractError("question 1 is not asked for item '" + id + "'");
    if (!it.is_baseline_original && !a.q1) throw ContractError("question 1 missing for item '" + id + "'");
  }
  for (const std::string& id : served) {
    if (!answers.contains(id)) throw ContractError("missing answer for item '" + id + "'");
  }
}

SessionState Service::submit_quiz(const std::string& worker_id, const std::map<std::string, Answers>& answers) {
  std::unique_lock lock(mutex_);
  const WorkerSession& s = find(worker_id);
  if (s.state == SessionState::kDisqualified) throw RejectedError("worker is disqualified");
  if (s.state != SessionState::kQuiz) throw ConflictError("quiz already graded");
  if (answers.size() != s.quiz_ids.size()) {
    throw ContractError("quiz needs " + std::to_string(s.quiz_ids.size()) + " answers, got " +
                        std::to_string(answers.size()));
  }
  check_answers(s.quiz_ids, answers);
  record({{"type", "quiz_submitted"}, {"worker", worker_id}, {"answers", answers_map_to_json(answers)}});
  return s.state;
}

std::vector<AnnotationItem> Service::next_page(const std::string& worker_id) {
  std::unique_lock lock(mutex_);
  const WorkerSession& s = find(worker_id);
  if (s.state == SessionState::kFinished) return {};
  if (s.state == SessionState::kDisqualified) throw RejectedError("worker is disqualified");
  if (s.state != SessionState::kActive) throw ConflictError("quiz not yet passed");
  std::vector<AnnotationItem> page;
  if (s.current_page.empty()) {
    std::vector<std::string> controls;
    for (const std::string& id : control_ids_) {
      if (!s.served_control_ids.contains(id)) controls.push_back(id);
    }
    std::vector<std::string> tasks = task_ids_;
    std::mt19937_64 order_rng(worker_seed(worker_id, 1));
    shuffle(tasks, order_rng);
    std::erase_if(tasks, [&](const std::string& id) { return s.served_item_ids.contains(id); });
    const std::size_t n_tasks = config_.page_size - 1;
    if (controls.empty() || tasks.size() < n_tasks) {
      record({{"type", "session_finished"}, {"worker", worker_id}});
      return {};
    }
    std::mt19937_64 rng(worker_seed(worker_id, 2 + s.pages_served));
    tasks.resize(n_tasks);
    const std::string control = controls[rng() % controls.size()];
    const std::size_t position = rng() % config_.page_size;
    tasks.insert(tasks.begin() + static_cast<std::ptrdiff_t>(position), control);
    record({{"type", "page_served"}, {"worker", worker_id}, {"items", tasks}});
  }
  for (const std::string& id : s.current_page) page.push_back(item(id));
  return page;
}

SessionState Service::submit_page(const std::string& worker_id, const std::map<std::string, Answers>& answers,
                                  std::optional<std::size_t> page_index) {
  std::unique_lock lock(mutex_);
  const WorkerSession& s = find(worker_id);
  if (page_index && *page_index < s.pages_submitted) return s.state;
  if (s.state == SessionState::kDisqualified) throw RejectedError("worker is disqualified");
  if (s.state != SessionState::kActive) throw ConflictError("session is " + to_string(s.state));
  if (s.current_page.empty()) throw ConflictError("no page is outstanding");
  if (page_index && *page_index + 1 != s.pages_served) throw ConflictError("page index does not match the outstanding page");
  check_answers(s.current_page, answers);
  record({{"type", "page_submitted"}, {"worker", worker_id}, {"answers", answers_map_to_json(answers)}});
  return s.state;
}

WorkerSession Service::session(const std::string& worker_id) const {
  std::shared_lock lock(mutex_);
  return find(worker_id);
}

void Service::check_token(const std::string& worker_id, const std::string& token) const {
  std::shared_lock lock(mutex_);
  if (find(worker_id).token != token) throw RejectedError("invalid session token");
}

Aggregate Service::aggregate() const {
  std::shared_lock lock(mutex_);
  struct Counts {
    std::map<std::string, std::size_t> q1, q2, q3, consistency;
    std::size_t n = 0;
    bool baseline = false;
  };
  std::map<std::pair<std::string, std::string>, Counts> cells;
  for (const StoredAnswer& a : answers_) {
    if (sessions_.at(a.worker_id).state == SessionState::kDisqualified) continue;
    const AnnotationItem& it = item(a.item_id);
    if (it.is_control) continue;
    Counts& c = cells[{it.method, it.threshold}];
    c.baseline = it.is_baseline_original;
    ++c.n;
    if (a.answers.q1) ++c.q1[to_string(*a.answers.q1)];
    ++c.q2[to_string(a.answers.q2)];
    ++c.q3[to_string(a.answers.q3)];
    const char* consistency = a.answers.q3 == Sentiment::kCannotTell ? "cannot-tell"
                              : (a.answers.q3 == Sentiment::kPositive) == (it.original_label == Label::kPositive)
                                  ? "consistent"
                                  : "flipped";
    ++c.consistency[consistency];
  }
  const auto shares = [](const std::vector<std::string>& options, const std::map<std::string, std::size_t>& counts,
                         std::size_t n) {
    OptionShares s;
    s.n = n;
    for (const std::string& o : options) {
      const auto it = counts.find(o);
      const std::size_t k = it == counts.end() ? 0 : it->second;
      s.percent[o] = n == 0 ? 0.0 : 100.0 * static_cast<double>(k) / static_cast<double>(n);
    }
    return s;
  };
  static const std::vector<std::string> kConsistency{"consistent", "flipped", "cannot-tell"};
  Aggregate out;
  for (const auto& [key, c] : cells) {
    CellAggregate cell;
    cell.method = key.first;
    cell.threshold = key.second;
    if (!c.baseline) cell.q1 = shares(kParaphrase, c.q1, c.n);
    cell.q2 = shares(kNaturalness, c.q2, c.n);
    cell.q3 = shares(kSentiment, c.q3, c.n);
    cell.q3_consistency = shares(kConsistency, c.consistency, c.n);
    out.cells.push_back(std::move(cell));
  }
  return out;
}

std::vector<json> Service::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

}  // namespace advtext::humaneval

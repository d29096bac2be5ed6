#include "augflow/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "augflow/errors.hpp"
#include "augflow/random.hpp"

namespace augflow {

using nlohmann::json;

std::string_view to_string(Role r) { return r == Role::user ? "user" : "assistant"; }

std::string_view to_string(Split s) { return s == Split::train ? "train" : "val"; }

std::string_view to_string(DatasetSplit s) {
  switch (s) {
    case DatasetSplit::train:
      return "train";
    case DatasetSplit::val:
      return "val";
    case DatasetSplit::synthetic:
      return "synthetic";
  }
  return "train";
}

DatasetSplit parse_dataset_split(std::string_view s) {
  if (s == "train") return DatasetSplit::train;
  if (s == "val") return DatasetSplit::val;
  if (s == "synthetic") return DatasetSplit::synthetic;
  throw std::invalid_argument("unknown split tag: " + std::string(s));
}

void check_sample(const Sample& s) {
  if (s.id.empty()) throw std::invalid_argument("sample id is empty");
  if (s.messages.size() != 2) {
    throw std::invalid_argument("expected exactly one user and one assistant turn, got " +
                                std::to_string(s.messages.size()) + " messages");
  }
  if (s.messages[0].role != Role::user || s.messages[1].role != Role::assistant) {
    throw std::invalid_argument("turns must be user then assistant");
  }
  if (s.origin == Origin::synthetic && !s.based_on_example && !s.based_on_strategy) {
    throw std::invalid_argument("synthetic sample " + s.id + " has no provenance");
  }
}

Sample make_sample(std::string id, std::string query, std::string answer, Split split) {
  Sample s;
  s.id = std::move(id);
  s.messages = {{Role::user, std::move(query)}, {Role::assistant, std::move(answer)}};
  s.split = split;
  return s;
}

const Sample* Dataset::find(std::string_view id) const {
  for (const auto& s : samples)
    if (s.id == id) return &s;
  return nullptr;
}

json sample_to_json(const Sample& s) {
  json j = json::object();
  j["sample_id"] = s.id;
  if (s.origin == Origin::synthetic) {
    j["is_synthetic"] = true;
    if (s.based_on_strategy) j["based_on_strategy"] = *s.based_on_strategy;
    if (s.based_on_example) j["based_on_example"] = *s.based_on_example;
  }
  json msgs = json::array();
  for (const auto& m : s.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j["messages"] = std::move(msgs);
  return j;
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw std::invalid_argument(std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

Sample sample_from_json(const json& j, Split split, const std::string& fallback_id) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  auto msgs = j.find("messages");
  if (msgs == j.end() || !msgs->is_array()) throw std::invalid_argument("missing \"messages\" array");

  Sample s;
  if (auto id = optional_string(j, "sample_id")) {
    s.id = *id;
  } else if (auto alt = optional_string(j, "id")) {
    s.id = *alt;
  } else {
    s.id = fallback_id;
  }
  for (const auto& m : *msgs) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content") || !m["role"].is_string() ||
        !m["content"].is_string()) {
      throw std::invalid_argument("message must have string \"role\" and \"content\"");
    }
    const auto role = m["role"].get<std::string>();
    if (role != "user" && role != "assistant") throw std::invalid_argument("unsupported role: " + role);
    s.messages.push_back({role == "user" ? Role::user : Role::assistant, m["content"].get<std::string>()});
  }
  auto syn = j.find("is_synthetic");
  s.origin = (syn != j.end() && syn->is_boolean() && syn->get<bool>()) ? Origin::synthetic : Origin::original;
  s.split = split;
  s.based_on_strategy = optional_string(j, "based_on_strategy");
  s.based_on_example = optional_string(j, "based_on_example");
  check_sample(s);
  return s;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetSplit split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  Dataset ds;
  ds.split = split;
  const Split sample_split = split == DatasetSplit::val ? Split::val : Split::train;
  const std::string prefix(to_string(split));
  std::unordered_set<std::string> seen;

  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    const std::size_t this_index = index++;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      auto s = sample_from_json(j, sample_split, prefix + "_" + std::to_string(this_index));
      if (!seen.insert(s.id).second) throw DuplicateId(s.id);
      ds.samples.push_back(std::move(s));
    } catch (const DuplicateId&) {
      throw;
    } catch (const std::exception& e) {
      throw MalformedRecord(this_index + 1, e.what());
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.split != DatasetSplit::val) {
    for (const auto& s : ds.samples) {
      if (s.split == Split::val) {
        throw ValidationLeak("validation sample " + s.id + " in " + std::string(to_string(ds.split)) +
                             " dataset destined for " + path.string());
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing " + path.string());
  for (const auto& s : ds.samples) out << sample_to_json(s).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

Dataset merge_augmented(const Dataset& train, const Dataset& syn) {
  Dataset merged;
  merged.split = DatasetSplit::train;
  merged.samples.reserve(train.size() + syn.size());
  std::unordered_set<std::string> ids;
  for (const auto* part : {&train, &syn}) {
    for (const auto& s : part->samples) {
      if (!ids.insert(s.id).second) throw DuplicateId(s.id);
      merged.samples.push_back(s);
    }
  }
  return merged;
}

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  Dataset out;
  out.split = ds.split;
  for (auto i : sample_indices(ds.size(), n, seed)) out.samples.push_back(ds.samples[i]);
  return out;
}

ValidationGuard::ValidationGuard(const Dataset& val, std::size_t min_content_len) {
  for (const auto& s : val.samples) {
    ids_.insert(s.id);
    needles_.push_back(s.id);
    for (const auto& m : s.messages) {
      if (m.content.size() >= min_content_len) needles_.push_back(m.content);
    }
  }
}

std::optional<std::string> ValidationGuard::find_leak(std::string_view text) const {
  for (const auto& n : needles_) {
    if (text.find(n) != std::string_view::npos) return n;
  }
  return std::nullopt;
}

std::string ValidationGuard::redact(std::string text) const {
  for (const auto& n : needles_) {
    for (auto pos = text.find(n); pos != std::string::npos; pos = text.find(n, pos)) {
      text.replace(pos, n.size(), "[redacted]");
      pos += 10;
    }
  }
  return text;
}

void ValidationGuard::check(const Sample& s) const {
  if (s.split == Split::val) throw ValidationLeak("sample " + s.id + " belongs to the validation split");
  if (is_validation_id(s.id)) throw ValidationLeak("sample id " + s.id + " is a validation id");
  if (s.based_on_example && is_validation_id(*s.based_on_example)) {
    throw ValidationLeak("sample " + s.id + " is based on validation sample " + *s.based_on_example);
  }
  if (s.origin != Origin::synthetic) return;
  for (const auto& m : s.messages) {
    if (auto leak = find_leak(m.content)) {
      throw ValidationLeak("sample " + s.id + " quotes validation content \"" + *leak + "\"");
    }
  }
}

void write_training_file(const Dataset& ds, const std::filesystem::path& path, const ValidationGuard& guard) {
  for (const auto& s : ds.samples) guard.check(s);
  write_dataset(ds, path);
}

}  // namespace augflow

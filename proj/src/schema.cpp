#include "dstkit/schema.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dstkit/error.hpp"
#include "dstkit/hashing.hpp"
#include "dstkit/log.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "schema";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(kModule), message);
}

std::optional<std::string> optional_description(const nlohmann::json& obj) {
  auto it = obj.find("description");
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) return std::nullopt;
  std::string value = it->get<std::string>();
  if (text::is_blank(value)) return std::nullopt;
  return value;
}

// MultiWOZ 2.2 names slots "<service>-<slot>"; the prefix is redundant with
// the owning domain and is dropped so prompts read "[slot] day".
std::string strip_domain_prefix(const std::string& domain, const std::string& slot) {
  const std::string prefix = domain + "-";
  if (slot.size() > prefix.size() && slot.compare(0, prefix.size(), prefix) == 0) {
    return slot.substr(prefix.size());
  }
  return slot;
}

SlotDef parse_slot(const std::string& domain, const nlohmann::json& obj) {
  if (!obj.is_object()) fail(ErrorKind::kInput, "domain '" + domain + "': slot entry is not an object");
  auto name_it = obj.find("name");
  if (name_it == obj.end() || !name_it->is_string()) {
    fail(ErrorKind::kInput, "domain '" + domain + "': slot without a string \"name\"");
  }
  SlotDef slot;
  slot.name = strip_domain_prefix(domain, name_it->get<std::string>());
  slot.description = optional_description(obj);
  if (auto it = obj.find("is_categorical"); it != obj.end()) {
    if (!it->is_boolean()) {
      fail(ErrorKind::kInput, "slot '" + domain + "-" + slot.name + "': \"is_categorical\" is not a boolean");
    }
    slot.is_categorical = it->get<bool>();
  }
  if (auto it = obj.find("possible_values"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) {
      fail(ErrorKind::kInput, "slot '" + domain + "-" + slot.name + "': \"possible_values\" is not a list");
    }
    for (const auto& v : *it) {
      if (!v.is_string()) {
        fail(ErrorKind::kInput, "slot '" + domain + "-" + slot.name + "': non-string possible value");
      }
      slot.possible_values.push_back(v.get<std::string>());
    }
  }
  return slot;
}

void validate(const std::vector<DomainDef>& domains) {
  std::unordered_set<std::string> domain_names;
  for (const auto& domain : domains) {
    if (domain.name.empty()) fail(ErrorKind::kValidation, "domain with empty name");
    if (!domain_names.insert(domain.name).second) {
      fail(ErrorKind::kValidation, "duplicate domain '" + domain.name + "'");
    }
    std::unordered_set<std::string> slot_names;
    for (const auto& slot : domain.slots) {
      const std::string where = "slot '" + domain.name + "-" + slot.name + "'";
      if (slot.name.empty()) {
        fail(ErrorKind::kValidation, "domain '" + domain.name + "': slot with empty name");
      }
      if (!slot_names.insert(slot.name).second) {
        fail(ErrorKind::kValidation, "duplicate " + where);
      }
      if (!slot.is_categorical && !slot.possible_values.empty()) {
        fail(ErrorKind::kValidation, where + ": non-categorical slot lists possible values");
      }
      std::unordered_set<std::string> values;
      for (const auto& v : slot.possible_values) {
        if (!values.insert(v).second) {
          fail(ErrorKind::kValidation, where + ": duplicate possible value '" + v + "'");
        }
      }
    }
  }
}

}  // namespace

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kMultiwoz21:
      return "multiwoz21";
    case Provenance::kMultiwoz22:
      return "multiwoz22";
    case Provenance::kM2M:
      return "m2m";
    case Provenance::kCustom:
      return "custom";
  }
  return "custom";
}

std::optional<Provenance> parse_provenance(std::string_view tag) {
  for (Provenance p : {Provenance::kMultiwoz21, Provenance::kMultiwoz22, Provenance::kM2M,
                       Provenance::kCustom}) {
    if (text::iequals(tag, to_string(p))) return p;
  }
  return std::nullopt;
}

const SlotDef* DomainDef::find_slot(std::string_view slot_name) const {
  for (const auto& slot : slots) {
    if (slot.name == slot_name) return &slot;
  }
  return nullptr;
}

Schema::Schema(std::vector<DomainDef> domains, Provenance provenance)
    : domains_(std::move(domains)), provenance_(provenance) {
  validate(domains_);
}

const DomainDef* Schema::find_domain(std::string_view name) const {
  for (const auto& domain : domains_) {
    if (domain.name == name) return &domain;
  }
  return nullptr;
}

const SlotDef* Schema::find_slot(const SlotKey& key) const {
  const DomainDef* domain = find_domain(key.domain);
  return domain ? domain->find_slot(key.slot) : nullptr;
}

std::vector<SlotKey> Schema::slot_keys() const {
  std::vector<SlotKey> keys;
  for (const auto& domain : domains_) {
    for (const auto& slot : domain.slots) keys.push_back({domain.name, slot.name});
  }
  return keys;
}

std::size_t Schema::num_slots() const {
  std::size_t n = 0;
  for (const auto& domain : domains_) n += domain.slots.size();
  return n;
}

std::size_t Schema::num_categorical() const {
  std::size_t n = 0;
  for (const auto& domain : domains_) {
    for (const auto& slot : domain.slots) n += slot.is_categorical ? 1 : 0;
  }
  return n;
}

std::string Schema::canonical_json() const {
  nlohmann::ordered_json services = nlohmann::ordered_json::array();
  for (const auto& domain : domains_) {
    nlohmann::ordered_json service;
    service["service_name"] = domain.name;
    if (domain.description) service["description"] = *domain.description;
    nlohmann::ordered_json slots = nlohmann::ordered_json::array();
    for (const auto& slot : domain.slots) {
      nlohmann::ordered_json s;
      s["name"] = slot.name;
      if (slot.description) s["description"] = *slot.description;
      s["is_categorical"] = slot.is_categorical;
      s["possible_values"] = slot.possible_values;
      slots.push_back(std::move(s));
    }
    service["slots"] = std::move(slots);
    services.push_back(std::move(service));
  }
  nlohmann::ordered_json root;
  root["provenance"] = std::string(to_string(provenance_));
  root["services"] = std::move(services);
  return root.dump();
}

Schema parse_schema_json(std::string_view json_text, Provenance provenance) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kInput, std::string("malformed schema JSON: ") + e.what());
  }
  if (!root.is_array()) fail(ErrorKind::kInput, "schema root must be a list of services");
  if (root.empty()) fail(ErrorKind::kValidation, "schema has an empty domain list");

  std::vector<DomainDef> domains;
  for (const auto& service : root) {
    if (!service.is_object()) fail(ErrorKind::kInput, "service entry is not an object");
    auto name_it = service.find("service_name");
    if (name_it == service.end() || !name_it->is_string()) {
      fail(ErrorKind::kInput, "service without a string \"service_name\"");
    }
    DomainDef domain;
    domain.name = name_it->get<std::string>();
    domain.description = optional_description(service);
    auto slots_it = service.find("slots");
    if (slots_it == service.end() || !slots_it->is_array()) {
      fail(ErrorKind::kInput, "domain '" + domain.name + "': missing \"slots\" list");
    }
    for (const auto& slot : *slots_it) domain.slots.push_back(parse_slot(domain.name, slot));
    domains.push_back(std::move(domain));
  }
  return Schema(std::move(domains), provenance);
}

Schema parse_schema(const std::filesystem::path& path, Provenance provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open schema file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_schema_json(buffer.str(), provenance);
}

Schema filter_domains(const Schema& schema, const std::set<std::string>& excluded) {
  if (excluded.empty()) return schema;
  std::vector<DomainDef> kept;
  for (const auto& domain : schema.domains()) {
    if (!excluded.contains(domain.name)) kept.push_back(domain);
  }
  if (kept.empty()) log::warn(kModule, "domain filter removed every domain; schema is empty");
  return Schema(std::move(kept), schema.provenance());
}

std::set<std::string> default_excluded_domains(Provenance provenance) {
  switch (provenance) {
    case Provenance::kMultiwoz21:
    case Provenance::kMultiwoz22:
      return {"police", "hospital"};
    default:
      return {};
  }
}

DescriptionTable parse_description_table(std::string_view tsv_text) {
  DescriptionTable table;
  std::istringstream in{std::string(tsv_text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::is_blank(line) || line.front() == '#') continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != 3) {
      fail(ErrorKind::kInput, "description table line " + std::to_string(line_no) +
                                  ": expected 3 tab-separated columns, got " +
                                  std::to_string(fields.size()));
    }
    if (line_no == 1 && fields[0] == "domain" && fields[1] == "slot" && fields[2] == "description") {
      continue;
    }
    if (fields[0].empty()) {
      fail(ErrorKind::kInput, "description table line " + std::to_string(line_no) + ": empty domain");
    }
    if (text::is_blank(fields[2])) continue;
    table[SlotKey{fields[0], fields[1]}].push_back(fields[2]);
  }
  return table;
}

DescriptionTable read_description_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open description table " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_description_table(buffer.str());
}

std::size_t sample_index(std::uint64_t seed, const SlotKey& key, std::size_t n) {
  if (n <= 1) return 0;
  std::uint64_t h = kFnvOffsetBasis;
  for (int i = 0; i < 8; ++i) {
    const char byte = static_cast<char>((seed >> (8 * i)) & 0xff);
    h = fnv1a64(std::string_view(&byte, 1), h);
  }
  h = fnv1a64(key.domain, h);
  h = fnv1a64(std::string_view("\0", 1), h);
  h = fnv1a64(key.slot, h);
  // mt19937_64 output is fully specified by the standard, unlike the
  // distributions, so the modulo keeps the choice portable.
  std::mt19937_64 rng(h);
  return static_cast<std::size_t>(rng() % n);
}

Schema resolve_descriptions(const Schema& schema, const DescriptionTable* overrides,
                            const DescriptionConfig& config) {
  if (overrides == nullptr || overrides->empty()) return schema;

  std::vector<std::string> unknown;
  for (const auto& [key, candidates] : *overrides) {
    bool known = key.slot.empty() ? schema.find_domain(key.domain) != nullptr : schema.contains(key);
    if (!known) unknown.push_back(key.slot.empty() ? key.domain : key.str());
  }
  if (!unknown.empty()) {
    fail(ErrorKind::kValidation,
         "description overrides reference unknown entries: " + text::join(unknown, ", "));
  }

  auto choose = [&](const SlotKey& key) -> std::optional<std::string> {
    auto it = overrides->find(key);
    if (it == overrides->end() || it->second.empty()) return std::nullopt;
    return it->second[sample_index(config.sampling_seed, key, it->second.size())];
  };

  std::vector<DomainDef> domains = schema.domains();
  for (auto& domain : domains) {
    if (auto chosen = choose({domain.name, ""})) domain.description = std::move(chosen);
    for (auto& slot : domain.slots) {
      if (auto chosen = choose({domain.name, slot.name})) slot.description = std::move(chosen);
    }
  }
  return Schema(std::move(domains), schema.provenance());
}

}  // namespace dstkit

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dstkit {

// Source dataset of a schema. Controls defaults such as which domains are
// excluded from experiments.
enum class Provenance { kMultiwoz21, kMultiwoz22, kM2M, kCustom };

std::string_view to_string(Provenance provenance);
std::optional<Provenance> parse_provenance(std::string_view tag);

// Address of one tracked slot. Ordering is lexicographic; canonical schema
// order is obtained from Schema::slot_keys().
struct SlotKey {
  std::string domain;
  std::string slot;

  auto operator<=>(const SlotKey&) const = default;
  bool operator==(const SlotKey&) const = default;

  // "domain-slot", the form used in SGD-format state annotations.
  std::string str() const { return domain + "-" + slot; }
};

struct SlotDef {
  std::string name;
  std::optional<std::string> description;
  bool is_categorical = false;
  std::vector<std::string> possible_values;

  bool operator==(const SlotDef&) const = default;
};

struct DomainDef {
  std::string name;
  std::optional<std::string> description;
  std::vector<SlotDef> slots;

  const SlotDef* find_slot(std::string_view slot_name) const;
  bool operator==(const DomainDef&) const = default;
};

// An ordered set of domains and slots. Construction validates name
// uniqueness and the categorical/value-list invariants; instances are
// immutable afterwards.
class Schema {
 public:
  Schema() = default;
  Schema(std::vector<DomainDef> domains, Provenance provenance);

  const std::vector<DomainDef>& domains() const { return domains_; }
  Provenance provenance() const { return provenance_; }
  bool empty() const { return domains_.empty(); }

  const DomainDef* find_domain(std::string_view name) const;
  const SlotDef* find_slot(const SlotKey& key) const;
  bool contains(const SlotKey& key) const { return find_slot(key) != nullptr; }

  // All (domain, slot) pairs in canonical order: domain order, then slot order.
  std::vector<SlotKey> slot_keys() const;

  std::size_t num_slots() const;
  std::size_t num_categorical() const;
  std::size_t num_noncategorical() const { return num_slots() - num_categorical(); }

  // Deterministic JSON rendering in SGD layout (descriptions omitted when
  // absent). Used for hashing and debugging.
  std::string canonical_json() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<DomainDef> domains_;
  Provenance provenance_ = Provenance::kCustom;
};

// Toggles for the prompt ablations plus the seed used when a slot has
// several candidate descriptions.
struct DescriptionConfig {
  bool use_domain_desc = false;
  bool use_slot_desc = false;
  bool use_value_list = false;
  std::uint64_t sampling_seed = 0;

  static DescriptionConfig all_on(std::uint64_t seed = 0) { return {true, true, true, seed}; }
};

// Candidate descriptions keyed by (domain, slot). A key with an empty slot
// name carries candidates for the domain description itself.
using DescriptionTable = std::map<SlotKey, std::vector<std::string>>;

Schema parse_schema(const std::filesystem::path& path, Provenance provenance);
Schema parse_schema_json(std::string_view json_text, Provenance provenance);

// Removes the named domains; names absent from the schema are ignored.
// Emits a warning when the result has no domains left.
Schema filter_domains(const Schema& schema, const std::set<std::string>& excluded);

// {police, hospital} for MultiWOZ, empty otherwise.
std::set<std::string> default_excluded_domains(Provenance provenance);

// Reads a UTF-8 TSV with columns domain, slot, description; one row per
// candidate. An optional "domain<TAB>slot<TAB>description" header and lines
// starting with '#' are skipped.
DescriptionTable read_description_table(const std::filesystem::path& path);
DescriptionTable parse_description_table(std::string_view tsv_text);

// Attaches exactly one description per described slot (and domain). When a
// key has several candidates the choice is made by sample_index(), so it is
// a pure function of (seed, domain, slot). Throws a validation error listing
// every override key the schema does not contain.
Schema resolve_descriptions(const Schema& schema, const DescriptionTable* overrides,
                            const DescriptionConfig& config);

// Deterministic choice in [0, n) keyed by (seed, domain, slot). Adding or
// removing other slots never changes the result for this key.
std::size_t sample_index(std::uint64_t seed, const SlotKey& key, std::size_t n);

}  // namespace dstkit

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "compass/bio/alphabet.hpp"
#include "compass/core/error.hpp"

namespace compass {

// One modification class and the residue letters it can occur on.
struct PtmType {
  std::string name;
  std::string eligible;  // residue letters, e.g. "STY"
};

// Ordered set of modification classes for a run. Index = class id.
class PtmTypeRegistry {
 public:
  PtmTypeRegistry() = default;
  explicit PtmTypeRegistry(std::vector<PtmType> types) : types_(std::move(types)) {}

  // The eight classes used for large-scale site profiling.
  static PtmTypeRegistry default_eight() {
    return PtmTypeRegistry({
        {"phosphorylation", "STY"},
        {"acetylation", "K"},
        {"ubiquitination", "K"},
        {"n_linked_glycosylation", "N"},
        {"o_linked_glycosylation", "ST"},
        {"methylation", "KR"},
        {"succinylation", "K"},
        {"sumoylation", "K"},
    });
  }

  std::size_t size() const { return types_.size(); }
  const PtmType& at(std::size_t i) const {
    if (i >= types_.size()) throw DataError("ptm type index " + std::to_string(i) + " out of range");
    return types_[i];
  }
  const std::vector<PtmType>& types() const { return types_; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < types_.size(); ++i)
      if (types_[i].name == name) return i;
    throw DataError("unknown ptm type '" + name + "'");
  }

  bool eligible(std::size_t type_idx, char residue) const {
    return at(type_idx).eligible.find(residue) != std::string::npos;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(types_.size());
    for (const auto& t : types_) out.push_back(t.name);
    return out;
  }

 private:
  std::vector<PtmType> types_;
};

// One experimental label: protein, 1-based position, residue letter,
// modification class.
struct PtmAnnotation {
  std::string protein_id;
  std::size_t position = 0;  // 1-based
  char residue = 'X';
  std::size_t ptm_type = 0;

  friend bool operator==(const PtmAnnotation&, const PtmAnnotation&) = default;
};

}  // namespace compass

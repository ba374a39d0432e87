#pragma once

// Numeric evidence drawn from log entries and the values derivable from it.
// Shared by the deterministic verifier, the groundedness metric and gate
// sample mining so all three agree on what "supported" means.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "logboard/log_store.hpp"
#include "logboard/text.hpp"

namespace logboard::evidence {

struct EvidenceNumeral {
    text::Numeral num;
    std::int64_t step = -1;
};

enum class Derivation { Difference, Sum, Ratio, PercentChange };

struct Derived {
    double value = 0.0;
    bool percent = false;
    Derivation kind = Derivation::Difference;
    std::vector<std::int64_t> steps;  // entries the operands came from
};

bool is_evidence(EntryType t);

/// Numerals of an entry's content, minus digits that belong to a cited source
/// id ("Table 1" in "(from Table 1)").
std::vector<text::Numeral> entry_numerals(const LogEntry& e);

/// Numerals of evidence entries (Lookup/Quote/Visual) in log order.
std::vector<EvidenceNumeral> evidence_numerals(std::span<const LogEntry> entries);

/// Numerals of Lookup/Visual entries only: the operands arithmetic is
/// recomputed from.
std::vector<EvidenceNumeral> arithmetic_operands(std::span<const LogEntry> entries);

/// Pairwise derivations over non-year operands, earlier-before-later:
/// later - earlier, sums, later / earlier, percentage change, plus the total
/// of all same-kind operands when there are more than two.
std::vector<Derived> derive(const std::vector<EvidenceNumeral>& operands);

/// Literal presence (same value and percent-ness) among evidence numerals.
bool literally_present(const text::Numeral& n, const std::vector<EvidenceNumeral>& ev);

/// Present literally, or equal (at the written precision) to a derived value
/// or its magnitude.
bool numerically_supported(const text::Numeral& n, const std::vector<EvidenceNumeral>& ev,
                           const std::vector<Derived>& derived);

/// Maximal runs of capitalized words, dropping a lone sentence-initial word
/// that is a common function word ("The", "Therefore", ...).
std::vector<std::string> capitalized_spans(std::string_view s);

}  // namespace logboard::evidence

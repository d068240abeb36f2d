#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace ppcov {

// The ten segment-level data practices, in stable index order 0-9.
enum class DataPractice : int {
    kFirstPartyCollectionUse = 0,
    kThirdPartySharingCollection = 1,
    kUserChoiceControl = 2,
    kUserAccessEditDeletion = 3,
    kDataRetention = 4,
    kDataSecurity = 5,
    kPolicyChange = 6,
    kDoNotTrack = 7,
    kInternationalSpecificAudiences = 8,
    kOther = 9,
};

inline constexpr int kNumPractices = 10;

constexpr int practice_index(DataPractice p) { return static_cast<int>(p); }

DataPractice practice_from_index(int index);

/// Canonical label string, e.g. "First Party Collection/Use".
std::string_view practice_name(DataPractice p);

/// Parses a canonical label string. Exact match only.
std::optional<DataPractice> parse_practice(std::string_view name);

/// Lenient parse for imported annotation tables: case-insensitive,
/// ignores punctuation, and accepts "and"/"&" spelling variants.
std::optional<DataPractice> parse_practice_lenient(std::string_view name);

std::array<DataPractice, kNumPractices> all_practices();

// Row order used by Table-style reports (Other last, marked by callers).
std::array<DataPractice, kNumPractices> report_row_order();

}  // namespace ppcov

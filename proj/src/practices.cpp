#include "ppcov/practices.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace ppcov {

namespace {

constexpr std::array<std::string_view, kNumPractices> kNames = {
    "First Party Collection/Use",
    "Third Party Sharing/Collection",
    "User Choice/Control",
    "User Access, Edit, & Deletion",
    "Data Retention",
    "Data Security",
    "Policy Change",
    "Do Not Track",
    "International & Specific Audiences",
    "Other",
};

// Lowercased alphanumeric skeleton; collapses "&" to "and".
std::string skeleton(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '&') {
            out += "and";
        } else if (std::isalnum(static_cast<unsigned char>(c))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

}  // namespace

DataPractice practice_from_index(int index) {
    if (index < 0 || index >= kNumPractices) {
        throw std::out_of_range("data practice index out of range: " + std::to_string(index));
    }
    return static_cast<DataPractice>(index);
}

std::string_view practice_name(DataPractice p) { return kNames[practice_index(p)]; }

std::optional<DataPractice> parse_practice(std::string_view name) {
    for (int i = 0; i < kNumPractices; ++i) {
        if (kNames[i] == name) return static_cast<DataPractice>(i);
    }
    return std::nullopt;
}

std::optional<DataPractice> parse_practice_lenient(std::string_view name) {
    const std::string key = skeleton(name);
    if (key.empty()) return std::nullopt;
    for (int i = 0; i < kNumPractices; ++i) {
        if (skeleton(kNames[i]) == key) return static_cast<DataPractice>(i);
    }
    return std::nullopt;
}

std::array<DataPractice, kNumPractices> all_practices() {
    std::array<DataPractice, kNumPractices> out{};
    for (int i = 0; i < kNumPractices; ++i) out[i] = static_cast<DataPractice>(i);
    return out;
}

std::array<DataPractice, kNumPractices> report_row_order() {
    return {
        DataPractice::kFirstPartyCollectionUse,
        DataPractice::kThirdPartySharingCollection,
        DataPractice::kUserChoiceControl,
        DataPractice::kDataSecurity,
        DataPractice::kInternationalSpecificAudiences,
        DataPractice::kUserAccessEditDeletion,
        DataPractice::kPolicyChange,
        DataPractice::kDataRetention,
        DataPractice::kDoNotTrack,
        DataPractice::kOther,
    };
}

}  // namespace ppcov

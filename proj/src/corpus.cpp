#include "ppcov/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "ppcov/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ppcov::corpus {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
    if (!fs::exists(dir)) throw DataError("missing directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

Dataset load_canonical_json(const std::string& root_path, LoadStats& stats) {
    Dataset ds;
    for (const auto& path : sorted_files(root_path, ".json")) {
        std::ifstream in(path);
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw DataError(path.string() + ": " + e.what());
        }
        if (!doc.contains("policy_id") || !doc.contains("segments")) {
            throw DataError(path.string() + ": policy record needs policy_id and segments");
        }
        const std::string policy_id = doc["policy_id"].get<std::string>();
        ds.policies.insert(policy_id);
        ++stats.policies;
        for (const auto& seg : doc["segments"]) {
            Segment s;
            s.policy_id = policy_id;
            s.segment_id = seg.at("segment_id").get<int>();
            s.text = seg.at("text").get<std::string>();
            const std::string label = seg.at("label").get<std::string>();
            auto practice = parse_practice(label);
            if (!practice) {
                throw DataError(path.string() + ": segment " + std::to_string(s.segment_id) +
                                ": unknown label '" + label + "'");
            }
            s.label = *practice;
            if (trim(s.text).empty()) {
                throw DataError(path.string() + ": segment " + std::to_string(s.segment_id) +
                                ": empty text");
            }
            ds.segments.push_back(std::move(s));
            ++stats.segments;
        }
    }
    return ds;
}

// Minimal RFC-4180 row reader. The annotation tables quote their
// attribute column, which embeds commas and escaped quotes.
std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string strip_html_tags(const std::string& html) {
    std::string out;
    out.reserve(html.size());
    bool in_tag = false;
    for (char c : html) {
        if (c == '<') {
            in_tag = true;
        } else if (c == '>') {
            in_tag = false;
            out += ' ';
        } else if (!in_tag) {
            out += c;
        }
    }
    return out;
}

std::vector<std::string> split_segments(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = text.find("|||", pos);
        if (next == std::string::npos) {
            parts.push_back(text.substr(pos));
            break;
        }
        parts.push_back(text.substr(pos, next - pos));
        pos = next + 3;
    }
    return parts;
}

// Raw layout: annotations/<policy>.csv rows
//   annotation_id,batch_id,annotator_id,policy_id,segment_id,category_name,...
// and sanitized_policies/<policy>.html with "|||" between segments.
Dataset load_opp115_raw(const std::string& root_path, LoadStats& stats) {
    const fs::path root(root_path);
    const fs::path ann_dir = root / "annotations";
    const fs::path pol_dir = root / "sanitized_policies";

    struct RawPolicy {
        std::string policy_id;
        std::vector<std::string> texts;
        std::map<int, std::vector<DataPractice>> annotations;
    };
    std::vector<RawPolicy> policies;
    std::array<std::int64_t, kNumPractices> global_freq{};

    for (const auto& csv_path : sorted_files(ann_dir, ".csv")) {
        RawPolicy rp;
        rp.policy_id = csv_path.stem().string();

        const fs::path html_path = pol_dir / (rp.policy_id + ".html");
        std::ifstream html_in(html_path);
        if (!html_in) throw DataError("missing policy text: " + html_path.string());
        std::stringstream buf;
        buf << html_in.rdbuf();
        for (const auto& part : split_segments(buf.str())) {
            rp.texts.push_back(trim(strip_html_tags(part)));
        }

        std::ifstream csv_in(csv_path);
        std::string line;
        int line_no = 0;
        while (std::getline(csv_in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto fields = parse_csv_row(line);
            if (fields.size() < 6) {
                throw DataError(csv_path.string() + ":" + std::to_string(line_no) +
                                ": expected at least 6 columns, got " +
                                std::to_string(fields.size()));
            }
            // Skip a header row if present.
            if (line_no == 1 && fields[5] == "category_name") continue;
            int segment_id = 0;
            try {
                segment_id = std::stoi(fields[4]);
            } catch (const std::exception&) {
                throw DataError(csv_path.string() + ":" + std::to_string(line_no) +
                                ": bad segment id '" + fields[4] + "'");
            }
            auto practice = parse_practice_lenient(fields[5]);
            if (!practice) {
                throw DataError(csv_path.string() + ":" + std::to_string(line_no) +
                                ": unknown category '" + fields[5] + "'");
            }
            if (segment_id < 0 || static_cast<std::size_t>(segment_id) >= rp.texts.size()) {
                throw DataError(csv_path.string() + ":" + std::to_string(line_no) +
                                ": segment " + std::to_string(segment_id) +
                                " absent from policy text (" + std::to_string(rp.texts.size()) +
                                " segments)");
            }
            rp.annotations[segment_id].push_back(*practice);
            ++global_freq[practice_index(*practice)];
        }
        policies.push_back(std::move(rp));
    }

    Dataset ds;
    for (const auto& rp : policies) {
        ds.policies.insert(rp.policy_id);
        ++stats.policies;
        for (std::size_t i = 0; i < rp.texts.size(); ++i) {
            auto it = rp.annotations.find(static_cast<int>(i));
            if (it == rp.annotations.end()) {
                ++stats.dropped_unannotated;
                continue;
            }
            if (rp.texts[i].empty()) {
                ++stats.dropped_empty_text;
                continue;
            }
            Segment s;
            s.policy_id = rp.policy_id;
            s.segment_id = static_cast<int>(i);
            s.text = rp.texts[i];
            s.label = consolidate_labels(it->second, global_freq);
            ds.segments.push_back(std::move(s));
            ++stats.segments;
        }
    }
    return ds;
}

}  // namespace

bool Dataset::operator==(const Dataset& other) const {
    if (policies != other.policies || segments.size() != other.segments.size()) return false;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const Segment& a = segments[i];
        const Segment& b = other.segments[i];
        if (a.policy_id != b.policy_id || a.segment_id != b.segment_id || a.text != b.text ||
            a.label != b.label) {
            return false;
        }
    }
    return true;
}

CorpusSchema schema_from_string(const std::string& name) {
    if (name == "canonical-json") return CorpusSchema::kCanonicalJson;
    if (name == "opp115-raw") return CorpusSchema::kOpp115Raw;
    throw UsageError("unknown corpus schema: " + name);
}

Dataset load_corpus(const std::string& root_path, CorpusSchema schema, LoadStats* stats) {
    if (!fs::exists(root_path)) throw DataError("corpus path does not exist: " + root_path);
    LoadStats local;
    Dataset ds = schema == CorpusSchema::kCanonicalJson ? load_canonical_json(root_path, local)
                                                        : load_opp115_raw(root_path, local);
    if (stats) *stats = local;
    if (local.dropped_unannotated > 0) {
        std::cerr << "load_corpus: dropped " << local.dropped_unannotated
                  << " unannotated segment(s)\n";
    }
    return ds;
}

void save_corpus(const Dataset& dataset, const std::string& dir) {
    fs::create_directories(dir);
    std::map<std::string, json> per_policy;
    for (const std::string& pid : dataset.policies) {
        per_policy[pid] = json{{"policy_id", pid}, {"segments", json::array()}};
    }
    for (const Segment& s : dataset.segments) {
        per_policy.at(s.policy_id)["segments"].push_back(
            json{{"segment_id", s.segment_id},
                 {"text", s.text},
                 {"label", std::string(practice_name(s.label))}});
    }
    for (const auto& [pid, doc] : per_policy) {
        std::ofstream out(fs::path(dir) / (pid + ".json"));
        out << doc.dump(2) << "\n";
    }
}

DataPractice consolidate_labels(const std::vector<DataPractice>& candidate_labels,
                                const std::array<std::int64_t, kNumPractices>& global_freq) {
    if (candidate_labels.empty()) throw DataError("consolidate_labels: empty label multiset");
    std::array<int, kNumPractices> votes{};
    for (DataPractice p : candidate_labels) ++votes[practice_index(p)];
    int best = -1;
    for (int i = 0; i < kNumPractices; ++i) {
        if (votes[i] == 0) continue;
        if (best < 0 || votes[i] > votes[best] ||
            (votes[i] == votes[best] && global_freq[i] > global_freq[best])) {
            best = i;
        }
        // Equal votes and equal global frequency keep the lower index.
    }
    return practice_from_index(best);
}

int FoldAssignment::fold_of(const Segment& s) const {
    auto it = assignment.find({s.policy_id, s.segment_id});
    if (it == assignment.end()) {
        throw DataError("no fold assigned for segment " + s.policy_id + "#" +
                        std::to_string(s.segment_id));
    }
    return it->second;
}

FoldAssignment stratified_folds(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("stratified_folds: k must be >= 2");
    FoldAssignment fa;
    fa.k = k;

    std::array<std::vector<std::size_t>, kNumPractices> by_class;
    for (std::size_t i = 0; i < dataset.segments.size(); ++i) {
        by_class[practice_index(dataset.segments[i].label)].push_back(i);
    }

    std::mt19937_64 rng(seed);
    for (int c = 0; c < kNumPractices; ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < static_cast<std::size_t>(k)) {
            std::cerr << "stratified_folds: class '"
                      << practice_name(practice_from_index(c)) << "' has only "
                      << members.size() << " segment(s) for k=" << k << "\n";
        }
        std::shuffle(members.begin(), members.end(), rng);
        const int offset = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        for (std::size_t i = 0; i < members.size(); ++i) {
            const Segment& s = dataset.segments[members[i]];
            fa.assignment[{s.policy_id, s.segment_id}] =
                static_cast<int>((i + static_cast<std::size_t>(offset)) % k);
        }
    }
    return fa;
}

std::array<std::int64_t, kNumPractices> class_distribution(const Dataset& dataset) {
    std::array<std::int64_t, kNumPractices> counts{};
    for (const Segment& s : dataset.segments) ++counts[practice_index(s.label)];
    return counts;
}

}  // namespace ppcov::corpus

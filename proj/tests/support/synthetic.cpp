#include "support/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

namespace testsup {

namespace {

using ppcov::DataPractice;
using ppcov::kNumPractices;

// Class mix per 1000 segments, same shape as the real annotation table:
// two dominant practices, a fat Other tail, thin DataRetention/DoNotTrack.
constexpr std::array<int, kNumPractices> kWeights = {240, 170, 120, 60, 25, 80, 50, 15, 70, 170};

const std::vector<std::string>& lexicon(int cls) {
    static const std::array<std::vector<std::string>, kNumPractices> kLexicons = {{
        {"collect", "collects", "email", "address", "name", "account", "register",
         "registration", "device", "demographic"},
        {"third", "parties", "party", "share", "shared", "advertisers", "partners",
         "affiliates", "vendors", "disclose"},
        {"choice", "choices", "opt", "consent", "preferences", "unsubscribe", "settings",
         "withdraw"},
        {"access", "edit", "delete", "deletion", "correct", "review", "modify", "erase"},
        {"retain", "retention", "store", "stored", "period", "duration", "archive"},
        {"security", "secure", "encryption", "encrypted", "safeguards", "ssl", "protect",
         "protection"},
        {"policy", "changes", "change", "updates", "updated", "revise", "revised", "notice",
         "effective", "posted"},
        {"dnt", "track", "tracking", "browser", "signals", "respond", "honor", "mechanism"},
        {"children", "child", "california", "residents", "european", "gdpr", "age", "minors",
         "jurisdiction"},
        {"contact", "questions", "definitions", "introduction", "scope", "purposes", "general",
         "describes"},
    }};
    return kLexicons[static_cast<std::size_t>(cls)];
}

const std::vector<std::string>& filler() {
    static const std::vector<std::string> kFiller = {
        "the",     "we",      "our",     "you",      "your",    "may",     "will",
        "this",    "that",    "privacy", "site",     "website", "data",    "information",
        "personal", "when",   "how",     "such",     "other",   "with",    "for",
        "and",     "are",     "is",      "to",       "of",      "in",      "on",
        "by",      "or",      "as",      "from",     "about",   "please",  "also",
        "any",     "can",     "be",      "time",     "visit",   "page",    "content",
        "services", "user",   "users",   "section",  "below",   "certain"};
    return kFiller;
}

// Word-order cues: the same token pair appears in both classes of a pair,
// in opposite orders, so bag-of-words counts carry no signal for them.
struct OrderCue {
    std::string first;
    std::string second;
};

const OrderCue* order_cue(int cls) {
    static const OrderCue kReceive{"receive", "directly"};
    static const OrderCue kReceiveFlip{"directly", "receive"};
    static const OrderCue kRestrict{"restrict", "handling"};
    static const OrderCue kRestrictFlip{"handling", "restrict"};
    static const OrderCue kAmend{"amend", "formally"};
    static const OrderCue kAmendFlip{"formally", "amend"};
    switch (cls) {
        case 0: return &kReceive;
        case 1: return &kReceiveFlip;
        case 5: return &kRestrict;
        case 2: return &kRestrictFlip;
        case 6: return &kAmend;
        case 3: return &kAmendFlip;
        default: return nullptr;
    }
}

class Generator {
public:
    Generator(const SyntheticSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

    std::string segment_text(int cls) {
        const int kDataRetention = 4;
        const int kDoNotTrack = 7;
        std::vector<std::string> tokens;
        if (cls == kDoNotTrack) {
            tokens = base_tokens(cls, spec_.signal_prob, -1.0, -1);
            insert_phrase(tokens, {"do", "not", "track"});
            insert_phrase(tokens, {"dnt"});
            insert_phrase(tokens, {"dnt"});
            insert_phrase(tokens, {"tracking"});
        } else if (cls == kDataRetention) {
            tokens = base_tokens(cls, spec_.signal_prob, spec_.dr_foreign_share, 0);
        } else if (order_cue(cls) != nullptr && real() < spec_.ordercue_rate) {
            tokens = base_tokens(cls, spec_.signal_prob / 6.0, -1.0, -1);
            const OrderCue* cue = order_cue(cls);
            for (int i = 0; i < 4; ++i) insert_phrase(tokens, {cue->first, cue->second});
        } else if (real() < spec_.contamination_rate) {
            int foreign = pick_foreign(cls);
            tokens = base_tokens(cls, spec_.signal_prob, 1.0 - spec_.contamination_own_share,
                                 foreign);
        } else {
            tokens = base_tokens(cls, spec_.signal_prob, -1.0, -1);
            if (cls == 6) {
                insert_phrase(tokens, {"policy", "changes"});
                insert_phrase(tokens, {"policy", "changes"});
            }
        }
        std::string text;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i > 0) text += ' ';
            text += tokens[i];
        }
        return text;
    }

    std::size_t segment_count() {
        return min_ + static_cast<std::size_t>(integer(max_ - min_ + 1));
    }

    void set_policy_bounds(std::size_t lo, std::size_t hi) {
        min_ = lo;
        max_ = hi;
    }

private:
    std::vector<std::string> base_tokens(int cls, double signal, double foreign_share,
                                         int foreign_cls) {
        std::size_t len = 25 + static_cast<std::size_t>(integer(46));
        std::vector<std::string> tokens;
        tokens.reserve(len + 8);
        for (std::size_t i = 0; i < len; ++i) {
            if (real() < signal) {
                int source = cls;
                if (foreign_share > 0.0 && real() < foreign_share) source = foreign_cls;
                if (cls == 0 && source == 0 && real() < 0.08) source = 4;
                tokens.push_back(pick(lexicon(source)));
            } else {
                tokens.push_back(pick(filler()));
            }
        }
        return tokens;
    }

    void insert_phrase(std::vector<std::string>& tokens, std::vector<std::string> phrase) {
        std::size_t pos = static_cast<std::size_t>(integer(static_cast<int>(tokens.size()) + 1));
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), phrase.begin(),
                      phrase.end());
    }

    // Weighted draw over classes, excluding the segment's own class and the
    // two thin classes whose precision the corpus controls directly.
    int pick_foreign(int own) {
        std::vector<double> w(kNumPractices, 0.0);
        for (int c = 0; c < kNumPractices; ++c) {
            if (c == own || c == 4 || c == 7) continue;
            w[static_cast<std::size_t>(c)] = kWeights[static_cast<std::size_t>(c)];
        }
        double total = std::accumulate(w.begin(), w.end(), 0.0);
        double r = real() * total;
        for (int c = 0; c < kNumPractices; ++c) {
            r -= w[static_cast<std::size_t>(c)];
            if (r <= 0.0) return c;
        }
        return 9;
    }

    const std::string& pick(const std::vector<std::string>& pool) {
        return pool[static_cast<std::size_t>(integer(static_cast<int>(pool.size())))];
    }

    double real() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

    int integer(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

    const SyntheticSpec& spec_;
    std::mt19937_64& rng_;
    std::size_t min_ = 8;
    std::size_t max_ = 12;
};

}  // namespace

ppcov::corpus::Dataset make_corpus(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    Generator gen(spec, rng);
    gen.set_policy_bounds(spec.min_segments_per_policy, spec.max_segments_per_policy);

    std::vector<std::size_t> per_policy(spec.n_policies);
    std::size_t total = 0;
    for (auto& n : per_policy) {
        n = gen.segment_count();
        total += n;
    }

    // Exact per-class quotas: floor of the proportional share, remainder to
    // the largest fractional parts (ties to the lower class index).
    std::array<std::size_t, kNumPractices> quota{};
    std::vector<std::pair<double, int>> fractional;
    std::size_t assigned = 0;
    for (int c = 0; c < kNumPractices; ++c) {
        double exact = static_cast<double>(total) * kWeights[static_cast<std::size_t>(c)] / 1000.0;
        quota[static_cast<std::size_t>(c)] = static_cast<std::size_t>(exact);
        assigned += quota[static_cast<std::size_t>(c)];
        fractional.emplace_back(exact - static_cast<double>(quota[static_cast<std::size_t>(c)]), c);
    }
    std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
        quota[static_cast<std::size_t>(fractional[i % fractional.size()].second)] += 1;
    }

    std::vector<int> pool;
    pool.reserve(total);
    for (int c = 0; c < kNumPractices; ++c) {
        pool.insert(pool.end(), quota[static_cast<std::size_t>(c)], c);
    }
    std::shuffle(pool.begin(), pool.end(), rng);

    ppcov::corpus::Dataset dataset;
    dataset.segments.reserve(total);
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < spec.n_policies; ++p) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth-%03zu", p + 1);
        std::string policy_id(buf);
        dataset.policies.insert(policy_id);
        for (std::size_t s = 0; s < per_policy[p]; ++s, ++cursor) {
            int cls = pool[cursor];
            ppcov::corpus::Segment seg;
            seg.policy_id = policy_id;
            seg.segment_id = static_cast<int>(s);
            seg.text = gen.segment_text(cls);
            seg.label = ppcov::practice_from_index(cls);
            dataset.segments.push_back(std::move(seg));
        }
    }
    return dataset;
}

KeywordToy make_keyword_toy(std::size_t per_class, std::uint64_t seed, std::size_t dim,
                            std::size_t max_len) {
    static const std::array<std::string, 3> kKeys = {"alpha", "bravo", "charlie"};
    static const std::vector<std::string> kNoise = {"one", "two", "three", "four", "five", "six"};

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> noise_pick(0, kNoise.size() - 1);

    std::vector<std::vector<std::string>> streams;
    KeywordToy toy;
    toy.max_len = max_len;
    for (std::size_t cls = 0; cls < kKeys.size(); ++cls) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::uniform_int_distribution<std::size_t> len_pick(max_len / 2, max_len);
            std::size_t len = len_pick(rng);
            std::vector<std::string> tokens(len);
            for (auto& t : tokens) t = kNoise[noise_pick(rng)];
            std::uniform_int_distribution<std::size_t> pos_pick(0, len - 1);
            tokens[pos_pick(rng)] = kKeys[cls];
            tokens[pos_pick(rng)] = kKeys[cls];
            streams.push_back(std::move(tokens));
            toy.labels.push_back(cls);
        }
    }
    toy.vocab = ppcov::features::build_vocabulary(streams, 1);
    for (const auto& s : streams) {
        toy.sequences.push_back(ppcov::features::encode_sequence(s, toy.vocab, max_len));
    }
    toy.table.dimension = dim;
    toy.table.source = ppcov::emb::EmbeddingSource::kRandom;
    toy.table.vectors = ppcov::nd::Tensor::uniform({toy.vocab.size(), dim}, 0.5, rng);
    for (std::size_t j = 0; j < dim; ++j) toy.table.vectors.at(0, j) = 0.0;
    return toy;
}

}  // namespace testsup

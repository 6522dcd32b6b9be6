#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/genpipe/client.hpp"
#include "regionkit/io/serialize.hpp"

namespace regionkit::evalkit {

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic: equal texts give equal vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

/// Lowercased alphanumeric words.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Word-count vectors over a fixed vocabulary plus one trailing slot for
/// out-of-vocabulary words.
class BagOfWordsProvider : public EmbeddingProvider {
 public:
  explicit BagOfWordsProvider(const std::vector<std::string>& vocabulary) {
    for (const auto& w : vocabulary) {
      for (auto& tok : word_tokens(w)) index_.emplace(tok, index_.size());
    }
  }

  /// Vocabulary built from every word in `texts`.
  static BagOfWordsProvider from_texts(const std::vector<std::string>& texts) {
    return BagOfWordsProvider(texts);
  }

  std::size_t dimension() const { return index_.size() + 1; }

  std::vector<double> embed(const std::string& text) override {
    std::vector<double> v(dimension(), 0.0);
    for (const auto& tok : word_tokens(text)) {
      auto it = index_.find(tok);
      v[it == index_.end() ? index_.size() : it->second] += 1.0;
    }
    return v;
  }

 private:
  std::map<std::string, std::size_t> index_;
};

/// Client for an embeddings HTTP endpoint: posts {"model", "input"} and
/// reads data[0].embedding.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(genpipe::Transport transport, std::string model)
      : transport_(std::move(transport)), model_(std::move(model)) {}

  std::vector<double> embed(const std::string& text) override {
    genpipe::HttpResult res;
    try {
      res = transport_(io::dump_line({{"model", model_}, {"input", text}}));
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("embedding request failed: ") + e.what());
    }
    if (res.status < 200 || res.status >= 300) {
      throw EvaluationError("embedding service returned HTTP " + std::to_string(res.status));
    }
    try {
      return io::json::parse(res.body).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const io::json::exception& e) {
      throw EvaluationError(std::string("bad embedding response: ") + e.what());
    }
  }

 private:
  genpipe::Transport transport_;
  std::string model_;
};

/// Throws ProviderContractError on a dimension mismatch or a zero vector.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ProviderContractError("embedding dimensions differ: " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw ProviderContractError("embedding has zero norm");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline constexpr std::string_view kReferencePrefix = "an image of a ";

struct CategoryMatch {
  std::string label;
  std::vector<double> similarities;  // one per candidate, in candidate order
};

/// The candidate whose "an image of a <label>" phrase is most similar to
/// the model output; ties go to the earlier candidate.
inline CategoryMatch match_category_scored(const std::string& model_output,
                                           const std::vector<std::string>& candidates,
                                           EmbeddingProvider& provider) {
  if (candidates.empty()) throw EvaluationError("no candidate labels");
  std::vector<double> out_vec;
  try {
    out_vec = provider.embed(model_output);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("embedding provider failed: ") + e.what());
  }
  CategoryMatch m;
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::vector<double> ref;
    try {
      ref = provider.embed(std::string(kReferencePrefix) + candidates[i]);
    } catch (const EvaluationError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("embedding provider failed: ") + e.what());
    }
    m.similarities.push_back(cosine(out_vec, ref));
    if (m.similarities[i] > m.similarities[best]) best = i;
  }
  m.label = candidates[best];
  return m;
}

inline std::string match_category(const std::string& model_output,
                                  const std::vector<std::string>& candidates,
                                  EmbeddingProvider& provider) {
  return match_category_scored(model_output, candidates, provider).label;
}

}  // namespace regionkit::evalkit

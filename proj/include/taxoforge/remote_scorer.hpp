// Copyright 2026 The TaxoForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// HTTP client for the relation scoring service.
//
//   POST /score  {"statements":[{"tokens":[str],"pos_a":int,"pos_b":int}]}
//                -> {"distributions":[[forward, backward, none]]}
//   POST /embed  {"term":str,"mentions":[{"tokens":[str],"pos":int}]}
//                -> {"vector":[f],"dim":int}
//   GET  /health -> {"status":"ok","model":str,"dim":int}
//
// Failures come back as {"error":str,"code":int}; 409 means no model is loaded.
// Connection failures and 5xx replies are retried with exponential backoff and
// surface as TransportError; any other error reply is a ProtocolError.

#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taxoforge/common.hpp"
#include "taxoforge/corpus.hpp"
#include "taxoforge/relation.hpp"

namespace taxoforge {

class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, int code) : Error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct Endpoint {
  std::string scheme = "http";
  std::string host = "127.0.0.1";
  int port = 8000;

  // Accepts "http://host:port", "host:port" or "host".
  static Endpoint parse(std::string_view url) {
    Endpoint e;
    std::string rest(url);
    if (auto p = rest.find("://"); p != std::string::npos) {
      e.scheme = rest.substr(0, p);
      rest = rest.substr(p + 3);
      if (e.scheme != "http") throw Error("unsupported scorer URL scheme: " + e.scheme);
    }
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    if (auto c = rest.rfind(':'); c != std::string::npos) {
      const std::string port = rest.substr(c + 1);
      rest = rest.substr(0, c);
      try {
        std::size_t used = 0;
        e.port = std::stoi(port, &used);
        if (used != port.size() || e.port <= 0 || e.port > 65535) throw std::invalid_argument(port);
      } catch (const std::exception&) {
        throw Error("bad port in scorer URL: " + std::string(url));
      }
    }
    if (rest.empty()) throw Error("scorer URL has no host: " + std::string(url));
    e.host = rest;
    return e;
  }

  std::string str() const { return scheme + "://" + host + ":" + std::to_string(port); }
};

struct RetryPolicy {
  int retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::seconds timeout{30};
};

struct HealthInfo {
  std::string status;
  std::string model;
  std::size_t dim = 0;
};

struct Mention {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
};

class RemoteScorer final : public RelationScorer {
 public:
  RemoteScorer(Endpoint endpoint, const Vocabulary& vocab, RetryPolicy policy = {}, std::size_t max_batch = 256)
      : endpoint_(std::move(endpoint)), vocab_(&vocab), policy_(policy), max_batch_(max_batch == 0 ? 1 : max_batch) {}

  std::string name() const override { return "remote(" + endpoint_.str() + ")"; }
  const Endpoint& endpoint() const { return endpoint_; }

  std::vector<RelationDistribution> score_batch(std::span<const RelationStatement> batch) const override {
    std::vector<RelationDistribution> out;
    out.reserve(batch.size());
    for (std::size_t lo = 0; lo < batch.size(); lo += max_batch_) {
      const auto chunk = batch.subspan(lo, std::min(max_batch_, batch.size() - lo));
      nlohmann::json body;
      body["statements"] = nlohmann::json::array();
      for (const auto& st : chunk) body["statements"].push_back(encode(st));
      const auto reply = request("POST", "/score", body.dump());
      const auto& dists = field(reply, "distributions", "/score");
      if (!dists.is_array() || dists.size() != chunk.size()) {
        throw ProtocolError("/score returned " + std::to_string(dists.is_array() ? dists.size() : 0) +
                                " distributions for " + std::to_string(chunk.size()) + " statements",
                            0);
      }
      for (const auto& d : dists) {
        if (!d.is_array() || d.size() != 3) throw ProtocolError("/score distribution must have 3 entries", 0);
        try {
          auto dist = RelationDistribution::of(d[0].get<double>(), d[1].get<double>(), d[2].get<double>());
          dist.validate();
          out.push_back(dist);
        } catch (const nlohmann::json::exception& e) {
          throw ProtocolError(std::string("/score distribution: ") + e.what(), 0);
        } catch (const ProtocolError&) {
          throw;
        } catch (const Error& e) {
          throw ProtocolError(std::string("/score distribution: ") + e.what(), 0);
        }
      }
    }
    return out;
  }

  std::vector<double> embed(const std::string& term, std::span<const Mention> mentions) const {
    if (mentions.empty()) throw Error("embedding a term needs at least one mention");
    nlohmann::json body;
    body["term"] = term;
    body["mentions"] = nlohmann::json::array();
    for (const auto& m : mentions) body["mentions"].push_back({{"tokens", m.tokens}, {"pos", m.pos}});
    const auto reply = request("POST", "/embed", body.dump());
    try {
      auto v = field(reply, "vector", "/embed").get<std::vector<double>>();
      const auto dim = field(reply, "dim", "/embed").get<std::size_t>();
      if (v.size() != dim) throw ProtocolError("/embed vector length differs from its dim field", 0);
      return v;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("/embed reply: ") + e.what(), 0);
    }
  }

  HealthInfo health() const {
    const auto reply = request("GET", "/health", {});
    try {
      HealthInfo h{field(reply, "status", "/health").get<std::string>(), reply.value("model", std::string()),
                   field(reply, "dim", "/health").get<std::size_t>()};
      if (h.status != "ok") throw ProtocolError("scorer health status is " + h.status, 0);
      return h;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("/health reply: ") + e.what(), 0);
    }
  }

  // Mentions of `term` in the corpus, at most `max_mentions`, for /embed.
  std::vector<Mention> mentions_of(const CorpusIndex& index, TermId term, std::size_t max_mentions) const {
    std::vector<Mention> out;
    for (SentenceId sid : index.postings(term)) {
      if (out.size() >= max_mentions) break;
      const auto& tokens = index.corpus().sentences[sid.index()].tokens;
      Mention m;
      m.pos = static_cast<std::size_t>(std::find(tokens.begin(), tokens.end(), term) - tokens.begin());
      for (TermId t : tokens) m.tokens.push_back(vocab_->term(t));
      out.push_back(std::move(m));
    }
    return out;
  }

 private:
  nlohmann::json encode(const RelationStatement& st) const {
    std::vector<std::string> tokens;
    tokens.reserve(st.tokens.size());
    for (TermId t : st.tokens) tokens.push_back(vocab_->term(t));
    return {{"tokens", tokens}, {"pos_a", st.pos_a}, {"pos_b", st.pos_b}};
  }

  static const nlohmann::json& field(const nlohmann::json& j, const char* key, const char* route) {
    if (!j.is_object() || !j.contains(key)) throw ProtocolError(std::string(route) + " reply lacks \"" + key + "\"", 0);
    return j[key];
  }

  nlohmann::json request(const std::string& method, const std::string& path, const std::string& body) const {
    auto backoff = policy_.initial_backoff;
    std::string last;
    const int attempts = policy_.retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(endpoint_.host, endpoint_.port);
      client.set_connection_timeout(policy_.timeout);
      client.set_read_timeout(policy_.timeout);
      client.set_write_timeout(policy_.timeout);
      auto res = method == "GET" ? client.Get(path) : client.Post(path, body, "application/json");
      if (!res) {
        last = path + ": " + httplib::to_string(res.error());
      } else if (res->status >= 500) {
        last = path + ": HTTP " + std::to_string(res->status) + " " + error_text(res->body);
      } else if (res->status != 200) {
        throw ProtocolError(path + ": HTTP " + std::to_string(res->status) + " " + error_text(res->body), res->status);
      } else {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw ProtocolError(path + ": malformed JSON reply: " + e.what(), 0);
        }
      }
      if (attempt < attempts) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * policy_.multiplier));
      }
    }
    throw TransportError("scorer " + endpoint_.str() + " unreachable, " + last, attempts);
  }

  static std::string error_text(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      if (j.is_object() && j.contains("error")) {
        std::string s = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
        if (j.contains("code")) s += " (code " + j["code"].dump() + ")";
        return s;
      }
    } catch (const nlohmann::json::exception&) {
    }
    return body.substr(0, 200);
  }

  Endpoint endpoint_;
  const Vocabulary* vocab_;
  RetryPolicy policy_;
  std::size_t max_batch_;
};

// One JSON object per line: {"tokens":[...],"pos_a":i,"pos_b":j,"label":"forward"}.
// This is the sample file handed to the scoring service's trainer.
inline void write_training_samples(std::span<const LabeledStatement> samples, const Vocabulary& vocab, std::ostream& out) {
  for (const auto& s : samples) {
    std::vector<std::string> tokens;
    for (TermId t : s.statement.tokens) tokens.push_back(vocab.term(t));
    nlohmann::json j{{"tokens", tokens}, {"pos_a", s.statement.pos_a}, {"pos_b", s.statement.pos_b},
                     {"label", std::string(to_string(s.label))}};
    out << j.dump() << '\n';
  }
}

}  // namespace taxoforge

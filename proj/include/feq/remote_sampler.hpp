#pragma once

// Client adapter for an annealing service speaking the JSON sample protocol:
//   request  {ising: {linear, quadratic, offset}, num_reads, annealing_time_us}
//   response {samples: [[+-1, ...], ...], energies: [...], num_occurrences: [...]}
// Returned energies are never trusted: every sample is re-evaluated against
// the unscaled Hamiltonian.

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

// Eigen must come first: httplib pulls in <resolv.h>, whose _res macro
// breaks Eigen's product kernels.
#include "feq/samplers.hpp"

#include <httplib.h>
#include <json.hpp>

namespace feq {

struct RemoteEndpoint {
  std::string base_url;  // scheme://host:port
  std::string path = "/sample";
  std::string token;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  double annealing_time_us = 20.0;
  bool rescale = true;  // fit biases and couplings into [-1, 1] before sending
};

inline constexpr const char* kTokenEnv = "FEQ_SAMPLER_TOKEN";
inline constexpr const char* kUrlEnv = "FEQ_SAMPLER_URL";

/// Endpoint from a JSON object {url, path, token, timeout_s, max_retries,
/// annealing_time_us, rescale}; the environment fills url/token when absent.
inline RemoteEndpoint endpoint_from_json(const nlohmann::json& j) {
  RemoteEndpoint ep;
  ep.base_url = j.value("url", std::string{});
  ep.path = j.value("path", ep.path);
  ep.token = j.value("token", std::string{});
  ep.timeout_seconds = j.value("timeout_s", ep.timeout_seconds);
  ep.max_retries = j.value("max_retries", ep.max_retries);
  ep.annealing_time_us = j.value("annealing_time_us", ep.annealing_time_us);
  ep.rescale = j.value("rescale", ep.rescale);
  if (ep.base_url.empty())
    if (const char* env = std::getenv(kUrlEnv)) ep.base_url = env;
  if (ep.token.empty())
    if (const char* env = std::getenv(kTokenEnv)) ep.token = env;
  if (ep.base_url.empty()) throw InvalidArgument("remote sampler: no endpoint url configured");
  if (ep.max_retries < 0) throw InvalidArgument("remote sampler: max_retries must be >= 0");
  return ep;
}

inline nlohmann::json remote_request(const StandardIsing& H, int reads, double annealing_time_us) {
  return {{"ising", ising_to_json(H)}, {"num_reads", reads}, {"annealing_time_us", annealing_time_us}};
}

struct RemoteParse {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

/// Expands num_occurrences, checks shapes, recomputes energies against H.
/// `energy_factor` converts a reported (scaled) energy back to H's units.
inline RemoteParse parse_remote_response(const nlohmann::json& body, const StandardIsing& H, int reads,
                                         double energy_factor = 1.0) {
  RemoteParse out;
  try {
    const auto& records = body.at("samples");
    if (!records.is_array()) throw SamplerError("malformed response: samples is not an array");
    const auto energies = body.contains("energies") ? body.at("energies").get<std::vector<double>>() : std::vector<double>{};
    const auto counts =
        body.contains("num_occurrences") ? body.at("num_occurrences").get<std::vector<long long>>() : std::vector<long long>{};
    if (!energies.empty() && energies.size() != records.size())
      throw SamplerError("malformed response: energies and samples differ in length");
    if (!counts.empty() && counts.size() != records.size())
      throw SamplerError("malformed response: num_occurrences and samples differ in length");
    for (std::size_t r = 0; r < records.size(); ++r) {
      const auto values = records[r].get<std::vector<int>>();
      if (static_cast<Index>(values.size()) != H.size())
        throw SamplerError("malformed response: sample " + std::to_string(r) + " has " +
                           std::to_string(values.size()) + " spins, expected " + std::to_string(H.size()));
      Sample s;
      s.spins.reserve(values.size());
      for (int v : values) {
        if (v != 1 && v != -1) throw SamplerError("malformed response: spin values must be +1 or -1");
        s.spins.push_back(static_cast<Spin>(v));
      }
      s.energy = total_energy(H, s.spins);
      if (!energies.empty()) {
        const double reported = energies[r] * energy_factor;
        if (std::abs(reported - s.energy) > 1e-6 * std::max(1.0, std::abs(s.energy)))
          out.warnings.push_back("sample " + std::to_string(r) + ": reported energy " + std::to_string(reported) +
                                 " replaced by local evaluation " + std::to_string(s.energy));
      }
      const long long times = counts.empty() ? 1 : counts[r];
      if (times < 0) throw SamplerError("malformed response: negative occurrence count");
      for (long long t = 0; t < times && static_cast<int>(out.samples.size()) < reads; ++t) out.samples.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SamplerError(std::string("malformed response: ") + e.what());
  }
  if (static_cast<int>(out.samples.size()) < reads)
    throw SamplerError("malformed response: " + std::to_string(out.samples.size()) + " samples for " +
                       std::to_string(reads) + " reads");
  return out;
}

class RemoteSampler final : public Sampler {
 public:
  explicit RemoteSampler(RemoteEndpoint endpoint) : ep_(std::move(endpoint)) {}

  std::string name() const override { return "remote"; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int last_attempts() const { return last_attempts_; }

  std::vector<Sample> sample_batch(const StandardIsing& H, int reads, std::uint64_t /*seed*/) override {
    if (reads < 1) throw InvalidArgument("sample_batch: need at least one read");
    StandardIsing sent = H;
    double factor = 1.0;
    if (ep_.rescale) {
      auto r = rescale_to_unit_range(H);
      sent = std::move(r.scaled);
      factor = r.factor;
    } else if (H.size() > 0 && std::max(H.h.cwiseAbs().maxCoeff(), H.J.cwiseAbs().maxCoeff()) > 1.0) {
      throw SamplerError("range violation: biases/couplings exceed [-1, 1]; enable rescaling");
    }
    const std::string payload = remote_request(sent, reads, ep_.annealing_time_us).dump();

    httplib::Client client(ep_.base_url);
    const auto secs = static_cast<time_t>(ep_.timeout_seconds);
    const auto usecs = static_cast<time_t>((ep_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    httplib::Headers headers;
    if (!ep_.token.empty()) headers.emplace("X-Auth-Token", ep_.token);

    std::string last_error;
    for (int attempt = 1; attempt <= ep_.max_retries + 1; ++attempt) {
      last_attempts_ = attempt;
      auto res = client.Post(ep_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw SamplerError("request rejected with status " + std::to_string(res->status), attempt);
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw SamplerError(std::string("malformed response: ") + e.what(), attempt);
      }
      auto parsed = parse_remote_response(body, H, reads, factor);
      warnings_.insert(warnings_.end(), parsed.warnings.begin(), parsed.warnings.end());
      return std::move(parsed.samples);
    }
    throw SamplerError("remote sampler failed after " + std::to_string(last_attempts_) + " attempts: " + last_error,
                       last_attempts_);
  }

 private:
  RemoteEndpoint ep_;
  std::vector<std::string> warnings_;
  int last_attempts_ = 0;
};

/// remote_sample(endpoint, H, reads, anneal_time_us)
inline std::vector<Sample> remote_sample(RemoteEndpoint endpoint, const StandardIsing& H, int reads,
                                         double annealing_time_us) {
  endpoint.annealing_time_us = annealing_time_us;
  RemoteSampler sampler(std::move(endpoint));
  return sampler.sample_batch(H, reads, 0);
}

}  // namespace feq

/*
 * Copyright 2026 The semshap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Serves the region oracle over the line protocol on stdin/stdout, with knobs
// for misbehaviour (out-of-order answers, bad handshakes, crashes, hangs).

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "semshap/embedding.hpp"
#include "semshap/model.hpp"
#include "semshap/protocol.hpp"

namespace {

using semshap::Capability;

class FakeModel final : public semshap::ModelHandle {
 public:
  FakeModel(semshap::RegionOracleConfig config, bool embed, bool activations)
      : oracle_(std::move(config)), embed_(embed), activations_(activations) {}

  std::string Caption(const semshap::Image& image,
                      const std::optional<std::string>& question) override {
    std::string caption = oracle_.Caption(image, question);
    if (question) caption = *question + " " + caption;
    return caption;
  }

  semshap::ActivationTensor Activations(const semshap::Image& image) override {
    if (!activations_) return ModelHandle::Activations(image);
    return oracle_.Activations(image);
  }

  std::vector<float> Embed(std::string_view text) override {
    if (!embed_) return ModelHandle::Embed(text);
    const auto e = embedder_.Embed(text);
    return {e.vector.begin(), e.vector.end()};
  }

  std::set<Capability> capabilities() const override {
    std::set<Capability> caps = {Capability::kCaption};
    if (activations_) caps.insert(Capability::kActivations);
    if (embed_) caps.insert(Capability::kEmbed);
    return caps;
  }
  semshap::Backbone backbone() const override { return oracle_.backbone(); }
  std::string description() const override { return "fake-model"; }

 private:
  semshap::RegionOracleModel oracle_;
  semshap::HashedNgramEmbedder embedder_{64};
  bool embed_;
  bool activations_;
};

void Emit(const semshap::protocol::Response& response) {
  std::cout << semshap::protocol::EncodeResponse(response) << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Protocol test double backed by the region oracle"};
  std::string oracle_path;
  bool embed = false;
  bool no_activations = false;
  int reverse = 0;
  std::string bad_hello;
  int crash_after = -1;
  bool hang = false;
  app.add_option("--oracle", oracle_path, "Region oracle config (JSON)")->required();
  app.add_flag("--embed", embed, "Advertise and serve the embed op");
  app.add_flag("--no-activations", no_activations, "Do not advertise activations");
  app.add_option("--reverse", reverse, "Answer requests in reverse order, N at a time");
  app.add_option("--bad-hello", bad_hello, "Malformed hello: missing | version | nocaps")
      ->check(CLI::IsMember({"missing", "version", "nocaps"}));
  app.add_option("--crash-after", crash_after, "Exit after answering N requests");
  app.add_flag("--hang", hang, "Never answer requests after the handshake");
  CLI11_PARSE(app, argc, argv);

  try {
    FakeModel model(semshap::RegionOracleConfig::Load(oracle_path), embed, !no_activations);
    std::vector<semshap::protocol::Response> held;
    int answered = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      const auto request = semshap::protocol::DecodeRequest(line);
      auto response = semshap::HandleRequest(model, request);
      if (request.op == semshap::protocol::op::kHello) {
        if (bad_hello == "missing") response.protocol_version.reset();
        if (bad_hello == "version") response.protocol_version = 99;
        if (bad_hello == "nocaps") response.capabilities = std::vector<std::string>{};
        Emit(response);
        continue;
      }
      if (hang) continue;
      if (crash_after >= 0 && answered >= crash_after) return 7;
      ++answered;
      if (reverse > 1) {
        held.push_back(std::move(response));
        if (static_cast<int>(held.size()) == reverse) {
          std::for_each(held.rbegin(), held.rend(), Emit);
          held.clear();
        }
        continue;
      }
      Emit(response);
    }
    std::for_each(held.rbegin(), held.rend(), Emit);
    if (hang) std::this_thread::sleep_for(std::chrono::hours(1));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fake_model: " << e.what() << "\n";
    return 1;
  }
}

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

#pragma once

// Client for model processes speaking the line protocol on stdin/stdout.
// Requests are pipelined (bounded window) and answers matched by id.

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "semshap/error.hpp"
#include "semshap/model.hpp"
#include "semshap/protocol.hpp"

extern char** environ;

namespace semshap {

inline constexpr const char* kTimeoutEnvVar = "SEMSHAP_MODEL_TIMEOUT_S";

struct BridgeOptions {
  // Maximum requests in flight.
  int window = 4;
  std::chrono::milliseconds timeout = std::chrono::seconds(120);

  // Defaults, with the timeout overridden by SEMSHAP_MODEL_TIMEOUT_S.
  static BridgeOptions FromEnvironment() {
    BridgeOptions options;
    if (const char* raw = std::getenv(kTimeoutEnvVar); raw != nullptr && *raw != '\0') {
      char* end = nullptr;
      const double seconds = std::strtod(raw, &end);
      if (end == raw || *end != '\0' || !(seconds > 0.0)) {
        throw ConfigError(std::string(kTimeoutEnvVar) + " must be a positive number, got '" +
                          raw + "'");
      }
      options.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0));
    }
    return options;
  }
};

struct HelloInfo {
  std::set<Capability> capabilities;
  Backbone backbone = Backbone::kOther;
};

// Validates a hello response.
inline HelloInfo ParseHello(const protocol::Response& response) {
  if (!response.ok) {
    throw ProtocolError("hello rejected: " + response.error.value_or("(no error message)"));
  }
  if (!response.protocol_version) throw ProtocolError("hello lacks protocol_version");
  if (*response.protocol_version != protocol::kProtocolVersion) {
    throw ProtocolError("model speaks protocol version " +
                        std::to_string(*response.protocol_version) +
                        ", client speaks version " +
                        std::to_string(protocol::kProtocolVersion));
  }
  HelloInfo info;
  for (const auto& name : response.capabilities.value_or(std::vector<std::string>{})) {
    if (auto c = ParseCapability(name)) info.capabilities.insert(*c);
  }
  if (info.capabilities.empty()) throw ProtocolError("hello advertises no known capabilities");
  info.backbone = ParseBackbone(response.backbone.value_or("other"));
  return info;
}

// Whitespace-separated words; single or double quotes group words.
inline std::vector<std::string> SplitCommandLine(std::string_view command) {
  std::vector<std::string> args;
  std::string current;
  bool in_word = false;
  char quote = 0;
  for (char c : command) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        current.push_back(c);
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
      in_word = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_word) args.push_back(std::move(current));
      current.clear();
      in_word = false;
    } else {
      current.push_back(c);
      in_word = true;
    }
  }
  if (quote) throw ConfigError("unterminated quote in model command");
  if (in_word) args.push_back(std::move(current));
  if (args.empty()) throw ConfigError("empty model command");
  return args;
}

class ExternalProcessModel final : public ModelHandle {
 public:
  explicit ExternalProcessModel(std::vector<std::string> argv,
                                BridgeOptions options = BridgeOptions::FromEnvironment())
      : argv_(std::move(argv)), options_(options), window_(std::max(1, options.window)) {
    if (argv_.empty()) throw ConfigError("empty model command");
    Spawn();
    reader_ = std::thread([this] { ReaderLoop(); });
    try {
      protocol::Request hello;
      hello.op = std::string(protocol::op::kHello);
      hello.protocol_version = protocol::kProtocolVersion;
      hello_ = ParseHello(Call(std::move(hello)));
    } catch (...) {
      Shutdown();
      throw;
    }
  }

  ~ExternalProcessModel() override { Shutdown(); }

  ExternalProcessModel(const ExternalProcessModel&) = delete;
  ExternalProcessModel& operator=(const ExternalProcessModel&) = delete;

  // Sends one request (id assigned here) and waits for its answer.
  protocol::Response Call(protocol::Request request) {
    window_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{window_};

    request.id = next_id_.fetch_add(1);
    auto future = router_.Expect(request.id);
    Send(protocol::EncodeRequest(request));
    if (future.wait_for(options_.timeout) != std::future_status::ready) {
      router_.Forget(request.id);
      throw ModelError("timed out after " +
                       std::to_string(options_.timeout.count() / 1000.0) + " s waiting for '" +
                       request.op + "' (id " + std::to_string(request.id) + ") from " +
                       description());
    }
    return future.get();
  }

  std::string Caption(const Image& image,
                      const std::optional<std::string>& question = std::nullopt) override {
    Require(Capability::kCaption);
    protocol::Request request;
    request.op = std::string(protocol::op::kCaption);
    request.image_png_b64 = Base64Encode(EncodePng(image));
    request.question = question;
    const auto response = CheckOk(Call(std::move(request)));
    if (!response.caption) throw ProtocolError("caption response lacks 'caption'");
    return *response.caption;
  }

  ActivationTensor Activations(const Image& image) override {
    Require(Capability::kActivations);
    protocol::Request request;
    request.op = std::string(protocol::op::kActivations);
    request.image_png_b64 = Base64Encode(EncodePng(image));
    const auto response = CheckOk(Call(std::move(request)));
    if (!response.shape || !response.layout || !response.data_b64) {
      throw ProtocolError("activations response lacks shape, layout or data_b64");
    }
    if (response.dtype.value_or("f32") != "f32") {
      throw ProtocolError("unsupported activation dtype '" + *response.dtype + "'");
    }
    nlohmann::json header = {{"layout", *response.layout}, {"shape", *response.shape}};
    if (response.grid) header["grid"] = *response.grid;
    if (response.prefix_token) header["prefix_token"] = *response.prefix_token;
    try {
      return ActivationFromHeader(header, UnpackFloat32(Base64Decode(*response.data_b64)));
    } catch (const Error& e) {
      throw ProtocolError(std::string("bad activation payload: ") + e.what());
    }
  }

  std::vector<float> Embed(std::string_view text) override {
    Require(Capability::kEmbed);
    protocol::Request request;
    request.op = std::string(protocol::op::kEmbed);
    request.text = std::string(text);
    const auto response = CheckOk(Call(std::move(request)));
    if (!response.dim || !response.data_b64) {
      throw ProtocolError("embed response lacks dim or data_b64");
    }
    std::vector<float> values;
    try {
      values = UnpackFloat32(Base64Decode(*response.data_b64));
    } catch (const Error& e) {
      throw ProtocolError(std::string("bad embedding payload: ") + e.what());
    }
    if (static_cast<int>(values.size()) != *response.dim) {
      throw ProtocolError("embedding has " + std::to_string(values.size()) +
                          " values, dim says " + std::to_string(*response.dim));
    }
    return values;
  }

  std::set<Capability> capabilities() const override { return hello_.capabilities; }
  Backbone backbone() const override { return hello_.backbone; }
  std::string description() const override { return "external model '" + argv_.front() + "'"; }

 private:
  void Require(Capability c) const {
    if (!hello_.capabilities.count(c)) {
      throw CapabilityError(description() + " did not advertise '" +
                            std::string(CapabilityName(c)) + "'");
    }
  }

  protocol::Response CheckOk(protocol::Response response) const {
    if (!response.ok) {
      throw ModelError(description() + " failed: " + response.error.value_or("(no message)"));
    }
    return response;
  }

  void Spawn() {
    int fds[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw ModelError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    const int rc = posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(fds[1]);
    if (rc != 0) {
      close(fds[0]);
      pid_ = -1;
      throw ModelError("cannot start model process '" + argv_.front() + "': " +
                       std::strerror(rc));
    }
    fd_ = fds[0];
  }

  void Send(const std::string& line) {
    std::lock_guard lock(write_mutex_);
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ModelError("write to " + description() + " failed: " + std::strerror(errno) +
                         ExitDiagnostics());
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void ReaderLoop() {
    std::string buffer;
    char chunk[65536];
    while (true) {
      const ssize_t n = ::read(fd_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
        const std::string_view line(buffer.data() + start, nl - start);
        if (line.empty()) continue;
        try {
          router_.Deliver(protocol::DecodeResponse(line));
        } catch (const Error& e) {
          router_.FailAll(description() + ": " + e.what());
        }
      }
      buffer.erase(0, start);
    }
    if (!stopping_) {
      router_.FailAll(description() + " closed its output" + ExitDiagnostics());
    } else {
      router_.FailAll(description() + " was shut down");
    }
  }

  // Reaps the child once; returns a description of how it ended, if known.
  std::string ExitDiagnostics(bool block = false) {
    std::lock_guard lock(reap_mutex_);
    if (pid_ > 0 && !exit_status_) {
      int status = 0;
      pid_t r = 0;
      for (int attempt = 0; attempt < (block ? 1 : 20); ++attempt) {
        r = waitpid(pid_, &status, block ? 0 : WNOHANG);
        if (r != 0 || block) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (r == pid_) exit_status_ = status;
    }
    if (!exit_status_) return "";
    if (WIFEXITED(*exit_status_)) {
      return " (process exited with status " + std::to_string(WEXITSTATUS(*exit_status_)) + ")";
    }
    if (WIFSIGNALED(*exit_status_)) {
      return " (process killed by signal " + std::to_string(WTERMSIG(*exit_status_)) + ")";
    }
    return "";
  }

  void Shutdown() {
    if (fd_ < 0) return;
    stopping_ = true;
    ::shutdown(fd_, SHUT_WR);
    bool exited = false;
    for (int attempt = 0; attempt < 200 && pid_ > 0; ++attempt) {
      std::lock_guard lock(reap_mutex_);
      if (exit_status_) {
        exited = true;
        break;
      }
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        exit_status_ = status;
        exited = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!exited && pid_ > 0) {
      kill(pid_, SIGKILL);
      ExitDiagnostics(/*block=*/true);
    }
    ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable()) reader_.join();
    close(fd_);
    fd_ = -1;
  }

  std::vector<std::string> argv_;
  BridgeOptions options_;
  std::counting_semaphore<> window_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::thread reader_;
  std::mutex write_mutex_;
  std::mutex reap_mutex_;
  std::optional<int> exit_status_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::int64_t> next_id_{0};
  protocol::ResponseRouter router_;
  HelloInfo hello_;
};

}  // namespace semshap

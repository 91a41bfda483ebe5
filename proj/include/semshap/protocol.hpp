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

// Newline-delimited JSON protocol spoken with external model processes.
//
//   request:  {"id":n,"op":"hello"|"caption"|"activations"|"embed", ...}
//   response: {"id":n,"ok":true, ...} or {"id":n,"ok":false,"error":"..."}
//
// Images travel as base64 PNG ("image_png_b64"); tensors and embeddings as
// base64 little-endian float32 ("data_b64").

#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "semshap/error.hpp"

namespace semshap::protocol {

inline constexpr int kProtocolVersion = 1;

namespace op {
inline constexpr std::string_view kHello = "hello";
inline constexpr std::string_view kCaption = "caption";
inline constexpr std::string_view kActivations = "activations";
inline constexpr std::string_view kEmbed = "embed";
}  // namespace op

struct Request {
  std::int64_t id = 0;
  std::string op;
  std::optional<int> protocol_version;
  std::optional<std::string> image_png_b64;
  std::optional<std::string> text;
  std::optional<std::string> question;

  friend bool operator==(const Request&, const Request&) = default;
};

struct Response {
  std::int64_t id = 0;
  bool ok = true;
  std::optional<std::string> error;
  // hello
  std::optional<int> protocol_version;
  std::optional<std::vector<std::string>> capabilities;
  std::optional<std::string> backbone;
  // caption
  std::optional<std::string> caption;
  // activations
  std::optional<std::vector<int>> shape;
  std::optional<std::string> layout;
  std::optional<std::string> dtype;
  std::optional<std::vector<int>> grid;
  std::optional<bool> prefix_token;
  // embed
  std::optional<int> dim;
  // activations and embed
  std::optional<std::string> data_b64;

  static Response Failure(std::int64_t id, std::string message) {
    Response r;
    r.id = id;
    r.ok = false;
    r.error = std::move(message);
    return r;
  }

  friend bool operator==(const Response&, const Response&) = default;
};

namespace internal {

template <typename T>
void PutOptional(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void GetOptional(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  const auto it = j.find(key);
  if (it != j.end() && !it->is_null()) out = it->get<T>();
}

inline nlohmann::json ParseObject(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("unparseable message: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message is not a JSON object");
  if (!j.contains("id") || !j["id"].is_number_integer()) {
    throw ProtocolError("message lacks an integer id");
  }
  return j;
}

}  // namespace internal

// One line, terminated by '\n'. JSON escaping keeps payload newlines out of
// the framing.
inline std::string EncodeRequest(const Request& r) {
  nlohmann::json j = {{"id", r.id}, {"op", r.op}};
  internal::PutOptional(j, "protocol_version", r.protocol_version);
  internal::PutOptional(j, "image_png_b64", r.image_png_b64);
  internal::PutOptional(j, "text", r.text);
  internal::PutOptional(j, "question", r.question);
  return j.dump() + "\n";
}

inline Request DecodeRequest(std::string_view line) {
  const nlohmann::json j = internal::ParseObject(line);
  try {
    Request r;
    r.id = j.at("id").get<std::int64_t>();
    r.op = j.at("op").get<std::string>();
    internal::GetOptional(j, "protocol_version", r.protocol_version);
    internal::GetOptional(j, "image_png_b64", r.image_png_b64);
    internal::GetOptional(j, "text", r.text);
    internal::GetOptional(j, "question", r.question);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
}

inline std::string EncodeResponse(const Response& r) {
  nlohmann::json j = {{"id", r.id}, {"ok", r.ok}};
  internal::PutOptional(j, "error", r.error);
  internal::PutOptional(j, "protocol_version", r.protocol_version);
  internal::PutOptional(j, "capabilities", r.capabilities);
  internal::PutOptional(j, "backbone", r.backbone);
  internal::PutOptional(j, "caption", r.caption);
  internal::PutOptional(j, "shape", r.shape);
  internal::PutOptional(j, "layout", r.layout);
  internal::PutOptional(j, "dtype", r.dtype);
  internal::PutOptional(j, "grid", r.grid);
  internal::PutOptional(j, "prefix_token", r.prefix_token);
  internal::PutOptional(j, "dim", r.dim);
  internal::PutOptional(j, "data_b64", r.data_b64);
  return j.dump() + "\n";
}

inline Response DecodeResponse(std::string_view line) {
  const nlohmann::json j = internal::ParseObject(line);
  try {
    Response r;
    r.id = j.at("id").get<std::int64_t>();
    r.ok = j.at("ok").get<bool>();
    internal::GetOptional(j, "error", r.error);
    internal::GetOptional(j, "protocol_version", r.protocol_version);
    internal::GetOptional(j, "capabilities", r.capabilities);
    internal::GetOptional(j, "backbone", r.backbone);
    internal::GetOptional(j, "caption", r.caption);
    internal::GetOptional(j, "shape", r.shape);
    internal::GetOptional(j, "layout", r.layout);
    internal::GetOptional(j, "dtype", r.dtype);
    internal::GetOptional(j, "grid", r.grid);
    internal::GetOptional(j, "prefix_token", r.prefix_token);
    internal::GetOptional(j, "dim", r.dim);
    internal::GetOptional(j, "data_b64", r.data_b64);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
}

// Pairs responses with outstanding requests by id, in whatever order they
// arrive.
class ResponseRouter {
 public:
  std::future<Response> Expect(std::int64_t id) {
    std::lock_guard lock(mutex_);
    if (failure_) {
      std::promise<Response> failed;
      failed.set_exception(std::make_exception_ptr(ModelError(*failure_)));
      return failed.get_future();
    }
    auto [it, inserted] = pending_.try_emplace(id);
    if (!inserted) throw ProtocolError("duplicate request id " + std::to_string(id));
    return it->second.get_future();
  }

  // Returns false for ids nobody is waiting on.
  bool Deliver(Response response) {
    std::lock_guard lock(mutex_);
    const auto it = pending_.find(response.id);
    if (it == pending_.end()) return false;
    it->second.set_value(std::move(response));
    pending_.erase(it);
    return true;
  }

  void Forget(std::int64_t id) {
    std::lock_guard lock(mutex_);
    pending_.erase(id);
  }

  // Fails every outstanding and future request.
  void FailAll(const std::string& message) {
    std::lock_guard lock(mutex_);
    if (!failure_) failure_ = message;
    for (auto& [id, promise] : pending_) {
      promise.set_exception(std::make_exception_ptr(ModelError(message)));
    }
    pending_.clear();
  }

  std::size_t outstanding() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::int64_t, std::promise<Response>> pending_;
  std::optional<std::string> failure_;
};

}  // namespace semshap::protocol

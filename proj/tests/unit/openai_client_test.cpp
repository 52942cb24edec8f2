// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "capvqa/backoff.hpp"
#include "capvqa/error.hpp"
#include "capvqa/openai_client.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

using nlohmann::json;

/// Local OpenAI-compatible stub on an ephemeral port.
class StubServer {
 public:
  StubServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_reply(const std::string& text) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}}
      .dump();
}

BackendConfig fast_config(const std::string& url, BackendKind kind = BackendKind::chat) {
  BackendConfig c;
  c.kind = kind;
  c.base_url = url;
  c.model = "stub-model";
  c.timeout_s = 5;
  c.max_retries = 3;
  c.backoff_base_s = 0.001;
  c.backoff_cap_s = 0.01;
  return c;
}

TEST(OpenAiChat, RetriesOn429ThenSucceeds) {
  StubServer stub;
  std::atomic<int> hits{0};
  std::string seen_body;
  std::string seen_auth;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                  httplib::Response& res) {
    if (hits++ < 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(chat_reply("Yes."), "application/json");
  });
  auto config = fast_config(stub.url());
  config.api_key = "sk-test";
  OpenAiChatClient client(config, 42);
  const auto answer = client.complete(ChatRequest::user("Is it sunny?", std::nullopt,
                                                        DecodingParams{}));
  EXPECT_EQ(answer, "Yes.");
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(client.stats().retries, 2u);
  EXPECT_EQ(client.stats().calls, 1u);
  EXPECT_EQ(client.stats().failures, 0u);
  EXPECT_EQ(seen_auth, "Bearer sk-test");

  const auto body = json::parse(seen_body);
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["temperature"], 0.2);
  EXPECT_EQ(body["top_p"], 1.0);
  EXPECT_EQ(body["frequency_penalty"], 0.0);
  EXPECT_EQ(body["presence_penalty"], 0.0);
  EXPECT_EQ(body["messages"][0]["content"], "Is it sunny?");
}

TEST(OpenAiChat, GivesUpAfterMaxRetries) {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  auto config = fast_config(stub.url());
  config.max_retries = 2;
  OpenAiChatClient client(config, 1);
  try {
    client.complete(ChatRequest::user("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHttpStatus);
  }
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(client.stats().failures, 1u);
}

TEST(OpenAiChat, ClientErrorsAreNotRetried) {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content(std::string(500, 'e'), "text/plain");
  });
  OpenAiChatClient client(fast_config(stub.url()), 1);
  try {
    client.complete(ChatRequest::user("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHttpStatus);
    EXPECT_LT(std::string(e.what()).size(), 300u);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(OpenAiChat, EmptyChoicesRejected) {
  StubServer stub;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  OpenAiChatClient client(fast_config(stub.url()), 1);
  try {
    client.complete(ChatRequest::user("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyChoice);
  }
}

TEST(OpenAiChat, UnreachableHostIsNetworkError) {
  auto config = fast_config("http://127.0.0.1:1");
  config.max_retries = 1;
  OpenAiChatClient client(config, 1);
  try {
    client.complete(ChatRequest::user("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNetwork);
  }
  EXPECT_EQ(client.stats().retries, 1u);
}

TEST(OpenAiChat, InFlightLimitHolds) {
  StubServer stub;
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  stub.server().new_task_queue = [] { return new httplib::ThreadPool(8); };
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --active;
    res.set_content(chat_reply("ok"), "application/json");
  });
  auto config = fast_config(stub.url());
  config.max_in_flight = 2;
  OpenAiChatClient client(config, 1);
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] { EXPECT_EQ(client.complete(ChatRequest::user("x")), "ok"); });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(OpenAiChat, LocalImagesTravelAsDataUris) {
  testing::TempDir dir;
  testing::write_text(dir / "p.png", "PNGDATA");
  const auto body = json::parse(OpenAiChatClient::request_body(
      fast_config("http://x"),
      ChatRequest::user("Describe the scene in this image", ImageRef{"p", (dir / "p.png").string()})));
  const auto& content = body["messages"][0]["content"];
  EXPECT_EQ(content[0]["text"], "Describe the scene in this image");
  EXPECT_EQ(content[1]["image_url"]["url"], "data:image/png;base64,UE5HREFUQQ==");
  EXPECT_FALSE(body.contains("temperature"));

  EXPECT_THROW(OpenAiChatClient::request_body(
                   fast_config("http://x"),
                   ChatRequest::user("x", ImageRef{"q", (dir / "none.png").string()})),
               Error);
}

TEST(OpenAiEmbedding, ReordersByIndex) {
  StubServer stub;
  std::string seen;
  stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.body;
    res.set_content(R"({"data": [{"index": 1, "embedding": [0, 1, 0]},
                                 {"index": 0, "embedding": [1, 0, 0]},
                                 {"index": 2, "embedding": [0, 0, 1]}]})",
                    "application/json");
  });
  OpenAiEmbeddingClient client(fast_config(stub.url(), BackendKind::embedding), 1);
  const std::vector<std::string> texts = {"a", "b", "c"};
  const auto vectors = client.embed(texts);
  ASSERT_EQ(vectors.size(), 3u);
  EXPECT_EQ(vectors[0].values()[0], 1.0);
  EXPECT_EQ(vectors[1].values()[1], 1.0);
  EXPECT_EQ(json::parse(seen)["input"], json::array({"a", "b", "c"}));
}

TEST(OpenAiEmbedding, CountMismatchRejected) {
  StubServer stub;
  stub.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data": [{"index": 0, "embedding": [1, 0]}]})", "application/json");
  });
  OpenAiEmbeddingClient client(fast_config(stub.url(), BackendKind::embedding), 1);
  const std::vector<std::string> texts = {"a", "b"};
  EXPECT_THROW(client.embed(texts), Error);
}

TEST(BackendConfig, Validation) {
  BackendConfig c;
  EXPECT_THROW(c.validate(), Error);
  c.base_url = "http://localhost:8000";
  c.model = "m";
  EXPECT_NO_THROW(c.validate());
  c.max_in_flight = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Backoff, FullJitterWithinCeiling) {
  ExponentialBackoff backoff(ExponentialBackoff::Duration(0.5), ExponentialBackoff::Duration(30),
                             3);
  EXPECT_DOUBLE_EQ(backoff.ceiling(0).count(), 0.5);
  EXPECT_DOUBLE_EQ(backoff.ceiling(3).count(), 4.0);
  EXPECT_DOUBLE_EQ(backoff.ceiling(10).count(), 30.0);
  EXPECT_DOUBLE_EQ(backoff.ceiling(200).count(), 30.0);
  for (int attempt = 0; attempt < 12; ++attempt) {
    for (int i = 0; i < 50; ++i) {
      const double d = backoff.delay(attempt).count();
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, backoff.ceiling(attempt).count());
    }
  }
}

TEST(Backoff, SeedDeterminesSequence) {
  ExponentialBackoff a(ExponentialBackoff::Duration(0.5), ExponentialBackoff::Duration(30), 9);
  ExponentialBackoff b(ExponentialBackoff::Duration(0.5), ExponentialBackoff::Duration(30), 9);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.delay(i).count(), b.delay(i).count());
}

}  // namespace
}  // namespace capvqa

#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "toolplanner/remote.hpp"

using namespace toolplanner;

namespace {

// A local HTTP server on an ephemeral port, torn down with the fixture.
class LocalServer {
 public:
  LocalServer() = default;
  ~LocalServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

ProviderConfig chat_config(const LocalServer& s) {
  ProviderConfig c;
  c.base_url = s.url();
  c.model = "planner-test";
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

EncoderConfig encoder_config(const LocalServer& s, std::size_t batch) {
  EncoderConfig c;
  c.base_url = s.url();
  c.batch_size = batch;
  c.api_key_env = "";
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

ToolRegistry explained(std::vector<std::string> ids) {
  ToolRegistry r;
  for (auto& id : ids) {
    ToolDescriptor t;
    t.tool_id = id;
    t.name = id;
    t.docs = "GET /" + id;
    t.description = id;
    t.explanation = "explains " + id;
    r.add(t);
  }
  return r;
}

}  // namespace

TEST(RemoteChat, SendsTheRequestAndReturnsTheText) {
  LocalServer s;
  nlohmann::json seen;
  std::string auth;
  s.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Step 1: tk0 geo"}}]})",
                    "application/json");
  });
  s.start();
  RemoteChatProvider p(chat_config(s), std::string("sk-test-123"));
  EXPECT_EQ(p.complete(ChatRequest::user("hello", 42)), "Step 1: tk0 geo");
  EXPECT_EQ(seen["model"], "planner-test");
  EXPECT_EQ(seen["seed"], 42);
  EXPECT_EQ(seen["messages"][0]["role"], "user");
  EXPECT_EQ(seen["messages"][0]["content"], "hello");
  EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.3);
  EXPECT_EQ(auth, "Bearer sk-test-123");
}

TEST(RemoteChat, HttpErrorIsRedactedProviderError) {
  LocalServer s;
  s.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("invalid key sk-secret-999", "text/plain");
  });
  s.start();
  RemoteChatProvider p(chat_config(s), std::string("sk-secret-999"));
  try {
    p.complete(ChatRequest::user("hi"));
    FAIL();
  } catch (const ProviderError& e) {
    const std::string what = e.what();
    EXPECT_EQ(what.find("sk-secret-999"), std::string::npos) << what;
    EXPECT_NE(what.find("HTTP 401"), std::string::npos) << what;
    EXPECT_NE(what.find("***"), std::string::npos) << what;
  }
}

TEST(RemoteChat, MalformedBodyIsProviderError) {
  LocalServer s;
  s.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  s.start();
  RemoteChatProvider p(chat_config(s), std::nullopt);
  EXPECT_THROW(p.complete(ChatRequest::user("hi")), ProviderError);
}

TEST(RemoteChat, UnreachableEndpointIsProviderError) {
  ProviderConfig c;
  c.base_url = "http://127.0.0.1:1";
  c.timeout = std::chrono::milliseconds(500);
  RemoteChatProvider p(c, std::nullopt);
  EXPECT_THROW(p.complete(ChatRequest::user("hi")), ProviderError);
}

TEST(RemoteChat, DescribeNeverShowsTheKey) {
  ProviderConfig c;
  RemoteChatProvider with_key(c, std::string("sk-abc"));
  RemoteChatProvider without(c, std::nullopt);
  EXPECT_EQ(with_key.describe().find("sk-abc"), std::string::npos);
  EXPECT_NE(with_key.describe().find("key ***"), std::string::npos);
  EXPECT_NE(without.describe().find("key none"), std::string::npos);
}

TEST(RemoteChat, BadTemperatureIsConfigError) {
  ProviderConfig c;
  c.temperature = 3.0;
  EXPECT_THROW(RemoteChatProvider(c, std::nullopt), Error);
}

TEST(Redact, ReplacesEveryOccurrence) {
  EXPECT_EQ(redact("k=abc and abc", std::string("abc")), "k=*** and ***");
  EXPECT_EQ(redact("nothing", std::nullopt), "nothing");
}

TEST(RemoteEncoder, VectorsFollowRegistryOrderAcrossBatches) {
  LocalServer s;
  std::mutex mu;
  std::vector<std::size_t> batch_sizes;
  s.server().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    auto texts = nlohmann::json::parse(req.body)["texts"];
    {
      std::lock_guard lock(mu);
      batch_sizes.push_back(texts.size());
    }
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : texts) {
      const auto text = t.get<std::string>();
      vectors.push_back({static_cast<double>(text.size()), static_cast<double>(text.back())});
    }
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  s.start();
  auto registry = explained({"alpha", "beta", "gamma_long"});
  auto set = embed_remote(registry, encoder_config(s, 2));
  EXPECT_EQ(batch_sizes, (std::vector<std::size_t>{2, 1}));
  ASSERT_EQ(set.size(), 3u);
  EXPECT_EQ(set.dims(), 2u);
  for (const auto& t : registry.tools()) {
    const auto text = *t.explanation;
    EXPECT_EQ(set.at(t.tool_id).values()[0], static_cast<double>(text.size())) << t.tool_id;
    EXPECT_EQ(set.at(t.tool_id).values()[1], static_cast<double>(text.back())) << t.tool_id;
  }
}

TEST(RemoteEncoder, CountMismatchIsProviderError) {
  LocalServer s;
  s.server().Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors":[[1.0,0.0]]})", "application/json");
  });
  s.start();
  EXPECT_THROW(embed_remote(explained({"a", "b"}), encoder_config(s, 8)), ProviderError);
}

TEST(RemoteEncoder, EmptyRegistryMakesNoRequest) {
  LocalServer s;
  std::atomic<int> hits{0};
  s.server().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(R"({"vectors":[]})", "application/json");
  });
  s.start();
  auto set = embed_remote(ToolRegistry{}, encoder_config(s, 4));
  EXPECT_TRUE(set.empty());
  EXPECT_EQ(hits.load(), 0);
}

TEST(RemoteEncoder, UnexplainedToolIsRejected) {
  ToolRegistry r;
  ToolDescriptor t;
  t.tool_id = "bare";
  t.name = "bare";
  t.docs = "GET /bare";
  r.add(t);
  EncoderConfig c;
  c.base_url = "http://127.0.0.1:1";
  try {
    embed_remote(r, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_explanation);
  }
}

TEST(RemoteEncoder, ZeroBatchIsConfigError) {
  EncoderConfig c;
  c.batch_size = 0;
  try {
    embed_remote(ToolRegistry{}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config_error);
  }
}

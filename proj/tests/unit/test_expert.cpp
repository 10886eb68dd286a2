#include <doctest.h>

#include <atomic>
#include <barrier>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "harness.hpp"
#include "toolhub/expert.hpp"

using namespace toolhub;
using namespace toolhub::expert;

namespace {

struct FakeClock {
    std::shared_ptr<std::atomic<double>> t = std::make_shared<std::atomic<double>>(1000.0);
    std::function<double()> fn() const {
        auto p = t;
        return [p] { return p->load(); };
    }
    void advance(double s) { *t = t->load() + s; }
};

httplib::Client client_for(const ExpertServer& server) {
    httplib::Client c("127.0.0.1", server.port());
    c.set_read_timeout(10, 0);
    return c;
}

int post(httplib::Client& c, const std::string& path, const json& body) {
    auto res = c.Post(path, body.dump(), "application/json");
    return res ? res->status : -1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_SUITE("expert") {

TEST_CASE("status and verdict names") {
    for (auto s : {RequestStatus::Pending, RequestStatus::Claimed, RequestStatus::Answered, RequestStatus::Expired}) {
        CHECK(request_status_from_string(to_string(s)) == s);
    }
    for (auto v : {Verdict::Approve, Verdict::Reject, Verdict::FreeText}) CHECK(verdict_from_string(to_string(v)) == v);
    CHECK(to_string(Verdict::FreeText) == "free-text");
    CHECK_FALSE(verdict_from_string("maybe").has_value());
}

TEST_CASE("queue lifecycle with a fake clock") {
    FakeClock clock;
    ExpertQueue q(QueueOptions{std::nullopt, 30.0, clock.fn()});
    auto a = q.create("first?", json{{"k", 1}}, 60);
    auto b = q.create("second?", json::object(), 60);
    CHECK(a.id == "req-000001");
    CHECK(b.id == "req-000002");
    CHECK(a.expires_at == doctest::Approx(1000.0 + 60 + 30));
    CHECK(q.position(a.id) == 1);
    CHECK(q.position(b.id) == 2);

    CHECK(q.claim(a.id, "ann") == Outcome::Ok);
    CHECK(q.claim(a.id, "ann") == Outcome::Ok);
    CHECK(q.claim(a.id, "bob") == Outcome::Conflict);
    CHECK(q.claim("req-999999", "ann") == Outcome::NotFound);
    CHECK(q.claim(b.id, "") == Outcome::Invalid);
    CHECK(q.position(a.id) == 0);
    CHECK(q.position(b.id) == 1);

    CHECK(q.respond(a.id, Verdict::FreeText, "", "ann") == Outcome::Invalid);
    // Anyone may answer; the claim does not reserve the answer.
    CHECK(q.respond(a.id, Verdict::Reject, "no", "bob") == Outcome::Ok);
    CHECK(q.respond(a.id, Verdict::Approve, "yes", "ann") == Outcome::Conflict);
    CHECK(q.get(a.id)->response->expert_id == "bob");

    // Past the timeout but inside the late window: still accepted.
    clock.advance(75);
    CHECK(q.get(b.id)->status == RequestStatus::Pending);
    auto c = q.create("third?", json::object(), 10);
    clock.advance(20);  // b is at 95 s of 90 allowed; c at 20 of 40
    CHECK(q.get(b.id)->status == RequestStatus::Expired);
    CHECK(q.respond(b.id, Verdict::Approve, "", "ann") == Outcome::Expired);
    CHECK(q.respond(c.id, Verdict::Approve, "", "ann") == Outcome::Ok);
    CHECK(q.list(RequestStatus::Expired).size() == 1);
    CHECK(q.list().size() == 3);
}

TEST_CASE("journal replay restores every state") {
    const auto dir = harness::temp_dir("journal");
    const auto path = dir / "expert.jsonl";
    FakeClock clock;
    std::vector<json> before;
    {
        ExpertQueue q(QueueOptions{path, 10.0, clock.fn()});
        auto a = q.create("a", json{{"x", 1}}, 5);
        auto b = q.create("b", json::object(), 100);
        auto c = q.create("c", json::object(), 100);
        q.create("d", json::object(), 100);
        q.claim(b.id, "ann");
        q.respond(c.id, Verdict::FreeText, "see notes", "bob");
        clock.advance(20);
        CHECK(q.expire_due() == std::vector<std::string>{a.id});
        for (const auto& r : q.list()) before.push_back(to_json(r));
    }
    // A torn last line is ignored.
    { std::ofstream(path, std::ios::app) << "{\"event\":\"answ"; }
    ExpertQueue again(QueueOptions{path, 10.0, clock.fn()});
    std::vector<json> after;
    for (const auto& r : again.list()) after.push_back(to_json(r));
    CHECK(after == before);
    CHECK(again.create("e").id == "req-000005");
    CHECK(again.respond("req-000003", Verdict::Approve, "", "carl") == Outcome::Conflict);
    CHECK(again.respond("req-000002", Verdict::Approve, "", "carl") == Outcome::Ok);
}

TEST_CASE("round trip through the consult tool is fast") {
    harness::ExpertService svc;
    harness::AutoResponder responder(svc.queue, "Proceed.", "dr-lee");
    auto rt = harness::demo_runtime();
    const auto t0 = std::chrono::steady_clock::now();
    auto r = rt->call({"consult_human_expert", {{"question", "Is PCSK9 a sound target?"}, {"timeout_seconds", 30}}});
    const double elapsed = seconds_since(t0);
    REQUIRE(r.ok());
    CHECK(r.payload == json{{"request_id", "req-000001"}, {"verdict", "approve"}, {"text", "Proceed."}, {"expert_id", "dr-lee"}});
    CHECK(elapsed < 2.0);
    auto status = rt->call({"get_expert_status", {{"request_id", "req-000001"}}});
    CHECK(status.payload == json{{"request_id", "req-000001"}, {"status", "answered"}, {"position", 0}});
    CHECK(rt->call({"get_expert_response", {{"request_id", "req-000001"}}}).payload == r.payload);
    CHECK(rt->call({"get_expert_response", {{"request_id", "req-000404"}}}).error->code == ErrorCode::ToolNotFound);
}

TEST_CASE("round trip with a human answering over http") {
    harness::ExpertService svc;
    ExpertClient client(svc.url());
    for (int i = 0; i < 5; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        auto created = client.create("q" + std::to_string(i), json::object(), 30);
        std::thread human([&] {
            auto c = client_for(svc.server);
            CHECK(post(c, "/api/requests/" + created.id + "/claim", {{"expert_id", "h"}}) == 200);
            CHECK(post(c, "/api/requests/" + created.id + "/response", {{"verdict", "reject"}, {"text", "no"}, {"expert_id", "h"}}) == 200);
        });
        auto done = client.wait(created.id, 10);
        human.join();
        REQUIRE(done);
        CHECK(done->status == RequestStatus::Answered);
        CHECK(done->response->verdict == Verdict::Reject);
        CHECK(seconds_since(t0) < 2.0);
    }
}

TEST_CASE("consult times out with the request id and can be answered later") {
    harness::ExpertService svc;
    auto rt = harness::demo_runtime();
    auto r = rt->call({"consult_human_expert", {{"question", "Anyone?"}, {"timeout_seconds", 0.3}}});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::ExpertUnavailable);
    CHECK(r.error->detail.at("request_id") == "req-000001");
    auto pending = rt->call({"get_expert_response", {{"request_id", "req-000001"}}});
    CHECK(pending.error->code == ErrorCode::ExpertUnavailable);
    CHECK(svc.queue.respond("req-000001", Verdict::FreeText, "late but useful", "slow") == Outcome::Ok);
    auto late = rt->call({"get_expert_response", {{"request_id", "req-000001"}}});
    REQUIRE(late.ok());
    CHECK(late.payload.at("text") == "late but useful");
}

TEST_CASE("expert tools without a server report ExpertUnavailable") {
    ::unsetenv("TOOLHUB_EXPERT_URL");
    auto rt = harness::demo_runtime();
    auto r = rt->call({"consult_human_expert", {{"question", "hello?"}}});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::ExpertUnavailable);
    ::setenv("TOOLHUB_EXPERT_URL", "http://127.0.0.1:1", 1);
    r = rt->call({"get_expert_status", {{"request_id", "req-000001"}}});
    CHECK(r.error->code == ErrorCode::ExpertUnavailable);
    ::unsetenv("TOOLHUB_EXPERT_URL");
}

TEST_CASE("exactly one answer wins a 16-way race") {
    harness::ExpertService svc;
    constexpr int kRacers = 16;
    for (int round = 0; round < 20; ++round) {
        const auto req = svc.queue.create("race " + std::to_string(round));
        std::atomic<int> ok{0}, conflict{0}, other{0};
        std::atomic<int> winner{-1};
        std::barrier sync(kRacers);
        std::vector<std::thread> threads;
        for (int i = 0; i < kRacers; ++i) {
            threads.emplace_back([&, i] {
                auto c = client_for(svc.server);
                sync.arrive_and_wait();
                const int code = post(c, "/api/requests/" + req.id + "/response",
                                      {{"verdict", "free-text"}, {"text", "answer " + std::to_string(i)}, {"expert_id", "e" + std::to_string(i)}});
                if (code == 200) {
                    ++ok;
                    winner = i;
                } else if (code == 409) {
                    ++conflict;
                } else {
                    ++other;
                }
            });
        }
        for (auto& t : threads) t.join();
        CHECK(ok == 1);
        CHECK(conflict == kRacers - 1);
        CHECK(other == 0);
        auto final = svc.queue.get(req.id);
        CHECK(final->response->text == "answer " + std::to_string(winner.load()));
    }
    std::size_t answered_events = 0;
    for (const auto& e : svc.queue.events_since(0, 0)) answered_events += e.type == "answered";
    CHECK(answered_events == 20);
}

TEST_CASE("claims race to a single owner") {
    harness::ExpertService svc;
    const auto req = svc.queue.create("claim me");
    std::atomic<int> ok{0}, conflict{0};
    std::barrier sync(16);
    std::vector<std::thread> threads;
    for (int i = 0; i < 16; ++i) {
        threads.emplace_back([&, i] {
            auto c = client_for(svc.server);
            sync.arrive_and_wait();
            const int code = post(c, "/api/requests/" + req.id + "/claim", {{"expert_id", "e" + std::to_string(i)}});
            (code == 200 ? ok : conflict)++;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 1);
    CHECK(conflict == 15);
}

TEST_CASE("http api status codes") {
    FakeClock clock;
    harness::ExpertService svc(QueueOptions{std::nullopt, 0.0, clock.fn()});
    auto c = client_for(svc.server);
    CHECK(post(c, "/api/requests", {{"nope", 1}}) == 400);
    CHECK(post(c, "/api/requests", {{"question", "q"}, {"timeout_seconds", -1}}) == 400);
    auto created = c.Post("/api/requests", json{{"question", "q"}, {"timeout_seconds", 5}}.dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = json::parse(created->body).at("id");
    CHECK(c.Get("/api/requests/req-424242")->status == 404);
    CHECK(c.Get("/api/requests?status=bogus")->status == 400);
    CHECK(c.Get("/api/requests/" + id + "/wait?timeout=0.2")->status == 408);
    CHECK(post(c, "/api/requests/" + id + "/response", {{"verdict", "perhaps"}}) == 400);
    CHECK(post(c, "/api/requests/" + id + "/response", {{"verdict", "free-text"}, {"text", ""}}) == 400);
    CHECK(post(c, "/api/requests/" + id + "/claim", json::object()) == 400);
    CHECK(post(c, "/api/requests/req-424242/claim", {{"expert_id", "x"}}) == 404);
    clock.advance(6);
    CHECK(post(c, "/api/requests/" + id + "/response", {{"verdict", "approve"}}) == 410);
    CHECK(post(c, "/api/requests/" + id + "/claim", {{"expert_id", "x"}}) == 410);
    CHECK(c.Get("/api/requests/" + id + "/wait?timeout=1")->status == 410);
    const json list = json::parse(c.Get("/api/requests?status=expired")->body);
    CHECK(list.at("requests").size() == 1);
}

TEST_CASE("event stream delivers changes and heartbeats") {
    harness::ExpertService svc;
    httplib::Client c("127.0.0.1", svc.server.port());
    c.set_read_timeout(5, 0);
    std::string received;
    std::mutex m;
    std::atomic<bool> done{false};
    std::thread reader([&] {
        c.Get("/api/events", [&](const char* data, std::size_t len) {
            std::lock_guard lock(m);
            received.append(data, len);
            return !done.load();
        });
    });
    auto seen = [&](const std::string& s) {
        for (int i = 0; i < 100; ++i) {
            {
                std::lock_guard lock(m);
                if (received.find(s) != std::string::npos) return true;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(30));
        }
        return false;
    };
    REQUIRE(seen(": connected"));
    const auto r = svc.queue.create("streamed?");
    CHECK(seen("event: created"));
    svc.queue.respond(r.id, Verdict::Approve, "", "x");
    CHECK(seen("event: answered"));
    CHECK(seen(": heartbeat"));
    done = true;
    svc.queue.create("wake the stream");
    reader.join();
}

}

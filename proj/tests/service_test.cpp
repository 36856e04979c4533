#include <thread>

#include <gtest/gtest.h>

#include "duality/http.hpp"
#include "duality/service.hpp"

using namespace duality;
using nlohmann::json;

namespace {

std::string create(ServiceCore& core, const json& body) {
    auto r = core.handle("POST", "/api/session", body.dump());
    EXPECT_EQ(r.status, 201) << r.body.dump();
    return r.body.value("session_id", "");
}

} // namespace

TEST(Service, CreateSession) {
    ServiceCore core;
    auto r = core.handle("POST", "/api/session", R"({"utility":"q1*q2"})");
    EXPECT_EQ(r.status, 201);
    EXPECT_EQ(r.body["n_goods"], 2);
    EXPECT_EQ(r.body["utility_text"], "q1*q2");
    EXPECT_EQ(r.body["session_id"], "s000001");
    auto f = core.handle("POST", "/api/session", R"({"family":"cobb_douglas:a1=0.3"})");
    EXPECT_EQ(f.body["utility_text"], "q1^0.3*q2^0.7");
    auto g = core.handle("POST", "/api/session", R"({"family":{"name":"ces","params":{"a1":0.4,"rho":-1}}})");
    EXPECT_EQ(g.status, 201);
    auto got = core.handle("GET", "/api/session/s000001", "");
    EXPECT_EQ(got.status, 200);
    EXPECT_EQ(got.body["utility_text"], "q1*q2");
}

TEST(Service, ErrorEnvelope) {
    ServiceCore core;
    auto bad = core.handle("POST", "/api/session", R"({"utility":"q1^"})");
    EXPECT_EQ(bad.status, 400);
    EXPECT_EQ(bad.body["error"]["kind"], "ParseError");
    EXPECT_EQ(bad.body["error"]["position"], 3);
    EXPECT_EQ(core.handle("POST", "/api/session", "{oops").body["error"]["kind"], "ParseError");
    EXPECT_EQ(core.handle("POST", "/api/session", R"({"family":"ces:rho=0"})").status, 400);
    EXPECT_EQ(core.handle("POST", "/api/session/nope/evaluate", "{}").status, 404);
    EXPECT_EQ(core.handle("GET", "/api/whatever", "").status, 404);
    EXPECT_EQ(core.handle("GET", "/api/session", "").status, 405);

    auto id = create(core, {{"utility", "q1*q2"}});
    auto r = core.handle("POST", "/api/session/" + id + "/evaluate", R"({"node":"MDF","point":{"P":"one"}})");
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["kind"], "ParseError");
    auto missing = core.handle("POST", "/api/session/" + id + "/evaluate", R"({"node":"MDF","point":{"P":[1,1]}})");
    EXPECT_EQ(missing.status, 400);
    EXPECT_EQ(missing.body["error"]["kind"], "DomainError");
    auto nc = create(core, {{"utility", "q1^2+q2^2"}});
    auto conv = core.handle("POST", "/api/session/" + nc + "/transition",
                            R"({"edge":"t_mdf_to_duf","point":{"q":[1,1]}})");
    EXPECT_EQ(conv.status, 422);
    EXPECT_EQ(conv.body["error"]["kind"], "ConvergenceError");
    EXPECT_TRUE(conv.body.contains("trace"));
}

TEST(Service, EvaluateAndTransition) {
    ServiceCore core;
    auto id = create(core, {{"utility", "q1*q2"}});
    auto e = core.handle("POST", "/api/session/" + id + "/evaluate", R"({"node":"MDF","point":{"P":[1,1],"M":2}})");
    ASSERT_EQ(e.status, 200) << e.body.dump();
    EXPECT_EQ(e.body["value"], json({1.0, 1.0}));
    EXPECT_EQ(e.body["provenance"], json({"t_primal_solve"}));

    auto t = core.handle("POST", "/api/session/" + id + "/transition",
                         R"({"edge":"t_roy","point":{"P":[1,1],"M":2}})");
    ASSERT_EQ(t.status, 200) << t.body.dump();
    EXPECT_NEAR(t.body["value"][0].get<double>(), 1.0, 1e-6);
    EXPECT_NEAR(t.body["value"][1].get<double>(), 1.0, 1e-6);
    ASSERT_EQ(t.body["trace"].size(), 3u);
    EXPECT_EQ(t.body["trace"][2]["edge"], "t_roy");
    EXPECT_EQ(t.body["provenance"], json({"t_primal_solve", "t_mdf_to_iuf", "t_roy"}));
}

TEST(Service, GraphAndPlan) {
    ServiceCore core;
    auto g = core.handle("GET", "/api/graph", "");
    EXPECT_EQ(g.body["nodes"].size(), 10u);
    EXPECT_EQ(g.body["edges"].size(), edge_registry().size());
    auto id = create(core, {{"utility", "q1*q2"}});
    auto p = core.handle("POST", "/api/session/" + id + "/plan",
                         R"({"from":"DUF","to":"HDF","point":{"P":[1,1],"u":1}})");
    ASSERT_EQ(p.status, 200);
    EXPECT_EQ(p.body["path"], json({"t_duf_to_df", "t_dual_solve"}));
    EXPECT_EQ(p.body["execution"]["value"], json({1.0, 1.0}));
    EXPECT_EQ(core.handle("POST", "/api/session/" + id + "/plan", R"({"from":"DUF","to":"ZZZ"})").status, 404);
}

TEST(Service, SlutskyVerifyDemo) {
    ServiceCore core;
    auto id = create(core, {{"utility", "q1*q2"}});
    auto s = core.handle("POST", "/api/session/" + id + "/slutsky", R"({"P":[1,1],"M":2,"i":1,"j":1})");
    ASSERT_EQ(s.status, 200) << s.body.dump();
    EXPECT_NEAR(s.body["total"].get<double>(), -1.0, 1e-6);
    EXPECT_NEAR(s.body["substitution"].get<double>(), -0.5, 1e-6);
    EXPECT_NEAR(s.body["income"].get<double>(), -0.5, 1e-6);
    EXPECT_EQ(core.handle("POST", "/api/session/" + id + "/slutsky", R"({"P":[1,1],"M":2,"i":3,"j":1})").status,
              400);

    auto v = core.handle("POST", "/api/session/" + id + "/verify",
                         R"({"identities":["roy","duality_gap"],"samples":3,"seed":1})");
    ASSERT_EQ(v.status, 200) << v.body.dump();
    EXPECT_EQ(v.body["summary"]["failed"], 0);
    EXPECT_EQ(v.body["summary"]["total"], 6);
    EXPECT_EQ(core.handle("POST", "/api/session/" + id + "/verify", R"({"identities":["nope"]})").status, 404);
    EXPECT_EQ(core.handle("POST", "/api/session/" + id + "/verify", R"({"samples":0})").status, 400);

    auto d = core.handle("POST", "/api/session/" + id + "/demo/nonconvex", "");
    ASSERT_EQ(d.status, 200);
    EXPECT_TRUE(d.body["nonconvex"]["convexified"].get<bool>());
    EXPECT_FALSE(d.body["control"]["convexified"].get<bool>());
}

TEST(Service, NumbersHaveTwelveSignificantDigits) {
    EXPECT_EQ(io::num(1.0 / 3.0).dump(), "0.333333333333");
    EXPECT_EQ(io::num(-0.0).dump(), "0.0");
    EXPECT_TRUE(io::num(NAN).is_null());
    EXPECT_TRUE(io::num(INFINITY).is_null());
    EXPECT_EQ(io::num(2.0).dump(), "2.0");
}

TEST(Service, LruEviction) {
    ServiceCore core(3);
    auto a = create(core, {{"utility", "q1*q2"}});
    create(core, {{"utility", "q1*q2"}});
    create(core, {{"utility", "q1*q2"}});
    core.handle("GET", "/api/session/" + a, ""); // a becomes most recent
    auto d = create(core, {{"utility", "q1*q2"}});
    EXPECT_EQ(core.session_count(), 3u);
    EXPECT_EQ(core.handle("GET", "/api/session/" + a, "").status, 200);
    EXPECT_EQ(core.handle("GET", "/api/session/s000002", "").status, 404);
}

TEST(Service, HttpRoundTrip) {
    ServiceCore core;
    httplib::Server server;
    mount(server, core);
    int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    auto r = client.Post("/api/session", R"({"utility":"q1*q2"})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 201);
    auto body = json::parse(r->body);
    auto t = client.Post("/api/session/" + body["session_id"].get<std::string>() + "/transition",
                         R"({"edge":"t_roy","point":{"P":[1,1],"M":2}})", "application/json");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->status, 200);
    EXPECT_EQ(t->get_header_value("Access-Control-Allow-Origin"), "*");
    auto g = client.Get("/api/graph");
    ASSERT_TRUE(g);
    EXPECT_EQ(json::parse(g->body)["nodes"].size(), 10u);
    server.stop();
    th.join();
}

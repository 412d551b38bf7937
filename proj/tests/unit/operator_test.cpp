/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "oracles.hpp"

#include <hstream/operator.hpp>

#include <gtest/gtest.h>

#include <thread>

namespace hstream {
namespace {

using F = AggregationFunction;
constexpr Millis kMin = 60'000;

Tuple tv(Millis ts, double v, std::string attr = "download_speed") {
    Tuple t;
    t.ts = Timestamp{ts};
    t.source_id = "thing";
    t.attributes.emplace(std::move(attr), v);
    return t;
}

OperatorConfig cfg(Frequency f, WindowSpec w, F fn, Millis lateness = 0) {
    OperatorConfig c;
    c.trigger = f;
    c.window = w;
    c.aggregation = fn;
    c.attribute = "download_speed";
    c.allowed_lateness = lateness;
    return c;
}

TEST(WindowExtent, Sliding) {
    const WindowSpec w{WindowKind::sliding, 8, TimeUnit::minutes};
    EXPECT_EQ(window_extent(w, Timestamp{100 * kMin}, Timestamp{0}),
              (Interval{Timestamp{92 * kMin}, Timestamp{100 * kMin}}));
    const auto a = window_extent(w, Timestamp{50 * kMin}, Timestamp{0});
    const auto b = window_extent(w, Timestamp{52 * kMin}, Timestamp{0});
    EXPECT_EQ(b.start - a.start, 2 * kMin);
    EXPECT_EQ(b.end - a.end, 2 * kMin);
}

TEST(WindowExtent, Landmark) {
    const WindowSpec w{WindowKind::landmark, 10, TimeUnit::days};
    const Timestamp t0{1'700'000'000'000};
    const auto e = window_extent(w, t0 + 3'600'000, t0);
    EXPECT_EQ(e.start, t0 - 10 * 86'400'000LL);
    EXPECT_EQ(e.end, t0 + 3'600'000);
    EXPECT_THROW(window_extent(w, t0 - 1, t0), ContractError);
}

TEST(WindowExtent, ClampsAtEpoch) {
    const WindowSpec w{WindowKind::sliding, 1, TimeUnit::hours};
    EXPECT_EQ(window_extent(w, Timestamp{1000}, Timestamp{0}).start, Timestamp{0});
}

/// In-memory connection over raw tuples, computing rows with the test oracle.
class OracleConnection : public Connection {
  public:
    explicit OracleConnection(std::vector<Tuple> tuples) : tuples_(std::move(tuples)) {}
    const SeriesRef& ref() const override { return ref_; }
    std::vector<AggregateRow> query_to_historic(const HistoricQuery& q) override {
        ++queries;
        return testing::oracle_historic(tuples_, q);
    }
    std::optional<Timestamp> latest_timestamp() const override { return std::nullopt; }
    void close() override {}
    bool is_open() const override { return true; }
    int queries = 0;

  private:
    SeriesRef ref_{"x", "y", "z"};
    std::vector<Tuple> tuples_;
};

TEST(HybridEvaluate, UnionOfHistoryAndLive) {
    OracleConnection hist({tv(10'000, 2), tv(20'000, 4), tv(70'000, 100)});
    LiveBuffer live;
    live.insert(Timestamp{70'000}, 6);
    live.insert(Timestamp{30'000}, 100);// before the split: served by history, ignored here
    const auto r = hybrid_evaluate(Interval{Timestamp{0}, Timestamp{120'000}}, Watermark(Timestamp{60'000}), live,
                                   &hist, cfg({2, TimeUnit::minutes}, {WindowKind::sliding, 2, TimeUnit::minutes}, F::mean));
    EXPECT_EQ(r.count, 3);
    EXPECT_EQ(r.value, 4.0);
    EXPECT_EQ(r.history_count, 2);
    EXPECT_EQ(r.live_count, 1);
}

TEST(HybridEvaluate, WindowAfterSplitSkipsHistory) {
    OracleConnection hist({tv(100, 50)});
    LiveBuffer live;
    live.insert(Timestamp{5000}, 1);
    live.insert(Timestamp{6000}, 3);
    const auto r = hybrid_evaluate(Interval{Timestamp{2000}, Timestamp{8000}}, Watermark(Timestamp{1000}), live, &hist,
                                   cfg({1, TimeUnit::seconds}, {WindowKind::sliding, 6, TimeUnit::seconds}, F::max));
    EXPECT_EQ(hist.queries, 0);
    EXPECT_EQ(r.value, 3.0);
    EXPECT_EQ(r.history_count, 0);
}

TEST(HybridEvaluate, WindowBeforeSplitIsHistoryOnly) {
    std::vector<Tuple> stored{tv(1000, 5), tv(2000, -1), tv(3000, 7)};
    OracleConnection hist(stored);
    LiveBuffer live;
    live.insert(Timestamp{2500}, 1000);
    const Interval w{Timestamp{0}, Timestamp{4000}};
    const auto r = hybrid_evaluate(w, Watermark(Timestamp{10'000}), live, &hist,
                                   cfg({1, TimeUnit::seconds}, {WindowKind::sliding, 4, TimeUnit::seconds}, F::min));
    const auto o = testing::oracle_aggregate(stored, "download_speed", F::min, w);
    EXPECT_EQ(r.value, o.value);
    EXPECT_EQ(r.count, o.count);
    EXPECT_EQ(r.live_count, 0);
}

TEST(HybridEvaluate, NoHistoricSourceBeyondRetention) {
    LiveBuffer live;
    auto c = cfg({1, TimeUnit::minutes}, {WindowKind::sliding, 30, TimeUnit::minutes}, F::mean);
    c.live_retention = 10 * kMin;
    const Timestamp split{100 * kMin};
    EXPECT_NO_THROW(hybrid_evaluate(Interval{split - 10 * kMin, split + kMin}, Watermark(split), live, nullptr, c));
    try {
        hybrid_evaluate(Interval{split - 29 * kMin, split + kMin}, Watermark(split), live, nullptr, c);
        FAIL();
    } catch (const IncompleteWindowError& e) {
        EXPECT_EQ(e.uncovered(), (Interval{split - 29 * kMin, split - 10 * kMin}));
    }
}

TEST(HybridEvaluate, EqualsMonolithicProperty) {
    std::mt19937_64 rng(4242);
    for (int c = 0; c < 300; ++c) {
        const Interval span{Timestamp{0}, Timestamp{1'000'000}};
        const auto n = std::uniform_int_distribution<std::size_t>(0, 500)(rng);
        const auto all = testing::random_tuples(rng, n, span, {"download_speed"}, 0.05);
        const Timestamp split{std::uniform_int_distribution<Millis>(0, 1'000'000)(rng)};
        OracleConnection hist(all);// the store may also hold data past the split
        LiveBuffer live;
        for (const auto& t : all) {
            if (auto v = as_number(t.attributes.at("download_speed")); v && t.ts >= split) live.insert(t.ts, *v);
        }
        Millis a = std::uniform_int_distribution<Millis>(0, 1'000'000)(rng);
        Millis b = std::uniform_int_distribution<Millis>(0, 1'000'000)(rng);
        if (a > b) std::swap(a, b);
        const Interval w{Timestamp{a}, Timestamp{b}};
        const auto fn = static_cast<F>(c % 3);
        const auto r = hybrid_evaluate(w, Watermark(split), live, &hist,
                                       cfg({1, TimeUnit::seconds}, {WindowKind::sliding, 1, TimeUnit::seconds}, fn));
        const auto o = testing::oracle_aggregate(all, "download_speed", fn, w);
        ASSERT_EQ(r.count, o.count);
        ASSERT_EQ(r.count, r.history_count + r.live_count);
        ASSERT_TRUE(testing::same_value(r.value, o.value, fn));
    }
}

TEST(Watermark, Monotonic) {
    Watermark w(Timestamp{10});
    w.advance(Timestamp{5});
    EXPECT_EQ(w.split(), Timestamp{10});
    w.advance(Timestamp{20});
    EXPECT_EQ(w.split(), Timestamp{20});
}

TEST(WindowOperator, AdmissionBoundaries) {
    const Timestamp t0{10 * kMin};
    WindowOperator op(cfg({2, TimeUnit::minutes}, {WindowKind::sliding, 8, TimeUnit::minutes}, F::max, 30'000), t0,
                      Watermark(t0));
    // Next window [t0 - 6min, t0 + 2min); bound is 30 s earlier.
    EXPECT_EQ(op.admission_bound(), t0 - 6 * kMin - 30'000);
    EXPECT_EQ(op.admit(tv(t0.millis, 1)), AdmitOutcome::admitted);
    EXPECT_EQ(op.admit(tv((t0 - 6 * kMin - 30'000).millis, 1)), AdmitOutcome::admitted);
    EXPECT_EQ(op.admit(tv((t0 - 6 * kMin - 30'001).millis, 1)), AdmitOutcome::late_dropped);
    EXPECT_EQ(op.admit(tv(t0.millis, 1, "other")), AdmitOutcome::ignored);
    Tuple text = tv(t0.millis, 0);
    text.attributes["download_speed"] = std::string("fast");
    EXPECT_EQ(op.admit(text), AdmitOutcome::ignored);
    EXPECT_EQ(op.stats().late_drops, 1u);
    EXPECT_EQ(op.stats().admitted, 2u);
    EXPECT_EQ(op.stats().ignored, 2u);
    EXPECT_EQ(op.stats().tuples_in, 5u);
}

TEST(WindowOperator, LatenessDelaysTrigger) {
    WindowOperator op(cfg({1, TimeUnit::minutes}, {WindowKind::sliding, 1, TimeUnit::minutes}, F::max, 5000),
                      Timestamp{0}, Watermark(Timestamp{0}));
    EXPECT_EQ(op.next_trigger(), Timestamp{kMin});
    EXPECT_EQ(op.next_deadline(), Timestamp{kMin + 5000});
    EXPECT_TRUE(op.fire_due(Timestamp{kMin + 4999}).empty());
    op.admit(tv(kMin - 1, 9));// arrives late but within the grace period
    const auto out = op.fire_due(Timestamp{kMin + 5000});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(std::get<WindowResult>(out[0]).value, 9.0);
    EXPECT_EQ(std::get<WindowResult>(out[0]).trigger_time, Timestamp{kMin});
}

TEST(WindowOperator, OneResultPerTriggerAndEmptyWindows) {
    const Timestamp t0{1'000'000};
    WindowOperator op(cfg({2, TimeUnit::minutes}, {WindowKind::sliding, 8, TimeUnit::minutes}, F::max), t0,
                      Watermark(t0));
    const auto out = op.fire_due(t0 + 20 * kMin);
    ASSERT_EQ(out.size(), 10u);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto& r = std::get<WindowResult>(out[k]);
        EXPECT_EQ(r.trigger_time, t0 + static_cast<Millis>(k + 1) * 2 * kMin);
        EXPECT_EQ(r.count, 0);
        EXPECT_FALSE(r.value);
    }
    EXPECT_EQ(op.stats().triggers_fired, 10u);
}

TEST(WindowOperator, IncompleteWindowBecomesErrorRecord) {
    auto c = cfg({1, TimeUnit::minutes}, {WindowKind::sliding, 2, TimeUnit::hours}, F::mean);
    const Timestamp t0{10 * 3'600'000};
    WindowOperator op(c, t0, Watermark(t0));
    const auto out = op.fire_due(t0 + kMin);
    ASSERT_EQ(out.size(), 1u);
    const auto* err = std::get_if<WindowError>(&out[0]);
    ASSERT_NE(err, nullptr);
    EXPECT_EQ(err->uncovered, (Interval{t0 + kMin - 2 * 3'600'000, t0 - 3'600'000}));
    EXPECT_EQ(op.stats().errors, 1u);
}

TEST(WindowOperator, EvictionKeepsBufferBounded) {
    const Timestamp t0{0};
    WindowOperator op(cfg({1, TimeUnit::seconds}, {WindowKind::sliding, 5, TimeUnit::seconds}, F::mean), t0,
                      Watermark(t0));
    for (Millis s = 0; s < 600; ++s) {
        for (int i = 0; i < 10; ++i) op.admit(tv(s * 1000 + i * 100, 1));
        op.fire_due(Timestamp{(s + 1) * 1000});
        ASSERT_LE(op.buffered(), 70u);
    }
}

TEST(WindowOperator, LandmarkCountNeverDecreases) {
    const Timestamp t0{10 * kMin};
    WindowOperator op(cfg({30, TimeUnit::seconds}, {WindowKind::landmark, 5, TimeUnit::minutes}, F::mean), t0,
                      Watermark(t0));
    std::mt19937_64 rng(8);
    std::int64_t last = -1;
    Millis now = t0.millis;
    for (int step = 0; step < 40; ++step) {
        for (int i = 0; i < 5; ++i) {
            op.admit(tv(now + std::uniform_int_distribution<Millis>(0, 29'999)(rng), 1.0));
        }
        now += 30'000;
        for (const auto& e : op.fire_due(Timestamp{now})) {
            const auto& r = std::get<WindowResult>(e);
            EXPECT_EQ(r.window.start, t0 - 5 * kMin);
            EXPECT_GE(r.count, last);
            last = r.count;
        }
    }
    EXPECT_EQ(op.stats().late_drops, 0u);
}

/// Results depend only on timestamps relative to the trigger, not on the origin.
TEST(WindowOperator, ShiftInvariance) {
    auto run = [](Millis origin) {
        WindowOperator op(cfg({10, TimeUnit::seconds}, {WindowKind::sliding, 30, TimeUnit::seconds}, F::mean),
                          Timestamp{origin}, Watermark(Timestamp{origin}));
        std::mt19937_64 rng(1);
        std::vector<WindowResult> out;
        for (int i = 0; i < 500; ++i) {
            const Millis off = std::uniform_int_distribution<Millis>(0, 299'999)(rng);
            op.admit(tv(origin + off, std::uniform_real_distribution<double>(0, 10)(rng)));
        }
        for (const auto& e : op.fire_through(Timestamp{origin + 300'000}, Timestamp{origin + 300'000})) {
            auto r = std::get<WindowResult>(e);
            r.trigger_time = Timestamp{r.trigger_time.millis - origin};
            r.window = Interval{Timestamp{r.window.start.millis - origin}, Timestamp{r.window.end.millis - origin}};
            out.push_back(r);
        }
        return out;
    };
    EXPECT_EQ(run(1'000'000), run(987'654'321'000));
}

TEST(Emission, EncodingFieldOrder) {
    WindowResult r{Timestamp{120}, Interval{Timestamp{0}, Timestamp{120}}, 3, 4.0, 2, 1};
    EXPECT_EQ(encode_emission(r),
              R"({"trigger_ts":120,"win_start":0,"win_end":120,"count":3,"value":4.0,"hist_count":2,"live_count":1})");
    WindowResult empty{Timestamp{120}, Interval{Timestamp{0}, Timestamp{120}}, 0, std::nullopt, 0, 0};
    EXPECT_EQ(encode_emission(empty, "op1"),
              R"({"trigger_ts":120,"win_start":0,"win_end":120,"count":0,"hist_count":0,"live_count":0,"op":"op1"})");
    WindowError err{Timestamp{5}, Interval{Timestamp{1}, Timestamp{2}}, "incomplete"};
    EXPECT_EQ(encode_emission(err), R"({"trigger_ts":5,"error":"incomplete","uncovered_start":1,"uncovered_end":2})");
}

TEST(Emission, TupleTransportRoundTrip) {
    const Emission r = WindowResult{Timestamp{120}, Interval{Timestamp{0}, Timestamp{120}}, 3, 4.5, 2, 1};
    const Emission e = WindowError{Timestamp{5}, Interval{Timestamp{1}, Timestamp{2}}, "x"};
    const Emission z = WindowResult{Timestamp{9}, Interval{Timestamp{0}, Timestamp{9}}, 0, std::nullopt, 0, 0};
    for (const auto& em : {r, e, z}) {
        const auto t = emission_to_tuple(em, "op0");
        EXPECT_EQ(t.source_id, "op0");
        EXPECT_EQ(tuple_to_emission(t), em);
    }
}

TEST(RunOperator, VirtualClockThreadedLoop) {
    testing::TempDir dir("runop");
    Broker broker(dir.path());
    QueueConfig in;
    in.name = "in";
    QueueConfig out;
    out.name = "out";
    auto qin = broker.declare_queue(in);
    auto qout = broker.declare_queue(out);
    const Timestamp t0{1'000'000};
    VirtualClock clock(t0);
    for (int i = 0; i < 60; ++i) qin->publish(tv(t0.millis + i * 1000, i));
    auto sub = qout->subscribe();
    {
        std::jthread worker([&](std::stop_token st) {
            run_operator(cfg({10, TimeUnit::seconds}, {WindowKind::sliding, 10, TimeUnit::seconds}, F::max),
                         qin->subscribe(), nullptr, qout, clock, st);
        });
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        clock.set(t0 + 60'000);
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        worker.request_stop();
    }
    std::vector<WindowResult> results;
    while (auto t = sub.try_receive()) results.push_back(std::get<WindowResult>(tuple_to_emission(*t)));
    ASSERT_EQ(results.size(), 6u);
    for (std::size_t k = 0; k < results.size(); ++k) {
        EXPECT_EQ(results[k].value, static_cast<double>(10 * k + 9));
        EXPECT_EQ(results[k].count, 10);
    }
}

TEST(OperatorTask, SinkClosedStopsAndReports) {
    testing::TempDir dir("task");
    Broker broker(dir.path());
    QueueConfig in;
    in.name = "in";
    QueueConfig out;
    out.name = "out";
    auto qin = broker.declare_queue(in);
    auto qout = broker.declare_queue(out);
    OperatorTask task("op0",
                      WindowOperator(cfg({1, TimeUnit::seconds}, {WindowKind::sliding, 1, TimeUnit::seconds}, F::max),
                                     Timestamp{0}, Watermark(Timestamp{0})),
                      qin->subscribe(), qout);
    EXPECT_TRUE(task.poll(Timestamp{1000}));
    EXPECT_EQ(task.tuples_out(), 1u);
    qout->close();
    EXPECT_FALSE(task.poll(Timestamp{2000}));
    EXPECT_TRUE(task.failed());
    EXPECT_NE(task.failure().find("sink closed"), std::string::npos);
}

}// namespace
}// namespace hstream

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

#include <hstream/broker.hpp>
#include <hstream/errors.hpp>
#include <hstream/tuple_codec.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

namespace hstream {
namespace {

using namespace std::chrono_literals;

Tuple tuple(Millis ts, double v, std::string src = "p") {
    Tuple t;
    t.ts = Timestamp{ts};
    t.source_id = std::move(src);
    t.attributes.emplace("v", v);
    return t;
}

QueueConfig config(std::string name, std::size_t cap = 10'000) {
    QueueConfig c;
    c.name = std::move(name);
    c.memory_capacity = cap;
    return c;
}

std::size_t files_under(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) return 0;
    std::size_t n = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(p)) n += e.is_regular_file();
    return n;
}

class BrokerTest : public ::testing::Test {
  protected:
    testing::TempDir dir{"broker"};
    Broker broker{dir.path()};
};

TEST_F(BrokerTest, DeclareIsIdempotentForIdenticalConfig) {
    auto a = broker.declare_queue(config("neubotspeed"));
    auto b = broker.declare_queue(config("neubotspeed"));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a->config().spill_directory, dir.path());
    EXPECT_THROW(broker.declare_queue(config("neubotspeed", 5)), ConfigConflictError);
    EXPECT_EQ(broker.find("neubotspeed"), a);
    EXPECT_EQ(broker.find("other"), nullptr);
}

TEST_F(BrokerTest, FifoOrder) {
    auto q = broker.declare_queue(config("q"));
    auto sub = q->subscribe();
    for (int i = 0; i < 10; ++i) q->publish(tuple(i, i));
    for (int i = 0; i < 10; ++i) {
        auto t = sub.try_receive();
        ASSERT_TRUE(t);
        EXPECT_EQ(t->ts.millis, i);
    }
    EXPECT_FALSE(sub.try_receive());
}

TEST_F(BrokerTest, ReceiveTimesOutEmpty) {
    auto q = broker.declare_queue(config("q"));
    auto sub = q->subscribe();
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_FALSE(sub.receive(10ms));
    EXPECT_GE(std::chrono::steady_clock::now() - t0, 9ms);
}

TEST_F(BrokerTest, SingleConsumer) {
    auto q = broker.declare_queue(config("q"));
    {
        auto sub = q->subscribe();
        EXPECT_THROW(q->subscribe(), ConfigConflictError);
    }
    EXPECT_NO_THROW(q->subscribe());
}

TEST_F(BrokerTest, ClosedQueueRejectsPublish) {
    auto q = broker.declare_queue(config("q"));
    auto sub = q->subscribe();
    q->publish(tuple(1, 1));
    q->close();
    EXPECT_TRUE(q->closed());
    EXPECT_THROW(q->publish(tuple(2, 2)), QueueClosedError);
    EXPECT_TRUE(sub.try_receive());
}

TEST_F(BrokerTest, StatsAccounting) {
    auto q = broker.declare_queue(config("q"));
    EXPECT_EQ(q->stats(), QueueStats{});
    auto sub = q->subscribe();
    for (int i = 0; i < 5; ++i) q->publish(tuple(i, i));
    sub.try_receive();
    sub.try_receive();
    const auto s = q->stats();
    EXPECT_EQ(s.published, 5u);
    EXPECT_EQ(s.delivered, 2u);
    EXPECT_EQ(s.in_memory + s.on_disk, 3u);
}

TEST_F(BrokerTest, SpillLosesNothingAndKeepsOrder) {
    auto q = broker.declare_queue(config("burst", 1000));
    std::vector<Tuple> sent;
    for (int i = 0; i < 10'000; ++i) {
        sent.push_back(tuple(i, i * 0.5, "p" + std::to_string(i % 3)));
        q->publish(sent.back());
        ASSERT_LE(q->stats().in_memory, 1000u);
    }
    auto s = q->stats();
    EXPECT_GE(s.spilled, 9000u);
    EXPECT_EQ(s.published, s.delivered + s.in_memory + s.on_disk);
    EXPECT_GT(files_under(dir.path() / "burst"), 0u);

    auto sub = q->subscribe();
    std::vector<Tuple> got;
    while (auto t = sub.try_receive()) got.push_back(std::move(*t));
    ASSERT_EQ(got.size(), sent.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_EQ(encode_tuple(got[i]), encode_tuple(sent[i]));
    }
    s = q->stats();
    EXPECT_EQ(s.delivered, 10'000u);
    EXPECT_EQ(s.in_memory + s.on_disk, 0u);
    EXPECT_EQ(files_under(dir.path() / "burst"), 0u);
}

TEST_F(BrokerTest, InterleavedSpillAndConsumeKeepsFifo) {
    auto q = broker.declare_queue(config("mix", 7));
    auto sub = q->subscribe();
    Millis next_in = 0, next_out = 0;
    std::mt19937_64 rng(3);
    for (int round = 0; round < 2000; ++round) {
        const int pub = std::uniform_int_distribution<int>(0, 20)(rng);
        for (int i = 0; i < pub; ++i) q->publish(tuple(next_in++, 0));
        const int take = std::uniform_int_distribution<int>(0, 20)(rng);
        std::vector<Tuple> batch;
        sub.receive_batch(batch, static_cast<std::size_t>(take));
        for (const auto& t : batch) ASSERT_EQ(t.ts.millis, next_out++);
        ASSERT_LE(q->stats().in_memory, 7u);
    }
    while (auto t = sub.try_receive()) ASSERT_EQ(t->ts.millis, next_out++);
    EXPECT_EQ(next_out, next_in);
}

TEST_F(BrokerTest, BlockPolicyWaitsForSpace) {
    auto c = config("blocking", 4);
    c.overflow_policy = OverflowPolicy::block;
    auto q = broker.declare_queue(c);
    auto sub = q->subscribe();
    std::atomic<int> published{0};
    std::jthread producer([&] {
        for (int i = 0; i < 100; ++i) {
            q->publish(tuple(i, i));
            ++published;
        }
    });
    std::this_thread::sleep_for(20ms);
    EXPECT_LE(published.load(), 4);
    int expected = 0;
    while (expected < 100) {
        auto t = sub.receive(1000ms);
        ASSERT_TRUE(t);
        EXPECT_EQ(t->ts.millis, expected++);
        EXPECT_LE(q->stats().in_memory, 4u);
    }
    EXPECT_EQ(q->stats().spilled, 0u);
}

TEST_F(BrokerTest, ConcurrentPublisherAndConsumer) {
    auto q = broker.declare_queue(config("live", 64));
    auto sub = q->subscribe();
    constexpr int kPublishers = 4;
    constexpr int kPerPublisher = 20'000;
    std::vector<std::jthread> pubs;
    for (int p = 0; p < kPublishers; ++p) {
        pubs.emplace_back([&, p] {
            for (int i = 0; i < kPerPublisher; ++i) q->publish(tuple(i, 0, "p" + std::to_string(p)));
        });
    }
    std::vector<Millis> last(kPublishers, -1);
    int received = 0;
    while (received < kPublishers * kPerPublisher) {
        auto t = sub.receive(2000ms);
        ASSERT_TRUE(t);
        const int p = t->source_id[1] - '0';
        ASSERT_GT(t->ts.millis, last[p]) << "per-publisher FIFO violated";
        last[p] = t->ts.millis;
        ++received;
    }
    pubs.clear();
    const auto s = q->stats();
    EXPECT_EQ(s.published, s.delivered);
    EXPECT_EQ(s.in_memory + s.on_disk, 0u);
}

TEST_F(BrokerTest, RemoveQueueDeletesSpillFiles) {
    auto q = broker.declare_queue(config("gone", 2));
    for (int i = 0; i < 50; ++i) q->publish(tuple(i, i));
    EXPECT_GT(files_under(dir.path() / "gone"), 0u);
    broker.remove_queue("gone");
    EXPECT_TRUE(q->closed());
    EXPECT_EQ(broker.find("gone"), nullptr);
    q.reset();
    EXPECT_EQ(files_under(dir.path() / "gone"), 0u);
}

TEST(BrokerEnv, SpillRootFromEnvironment) {
    testing::TempDir dir("env");
    ::setenv("HSTREAM_SPILL_DIR", dir.path().c_str(), 1);
    EXPECT_EQ(default_spill_root(), dir.path());
    Broker b;
    EXPECT_EQ(b.spill_root(), dir.path());
    ::unsetenv("HSTREAM_SPILL_DIR");
    EXPECT_NE(default_spill_root(), dir.path());
}

}// namespace
}// namespace hstream

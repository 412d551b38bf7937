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

#include <hstream/errors.hpp>
#include <hstream/model.hpp>

#include <gtest/gtest.h>

#include <random>

namespace hstream {
namespace {

TEST(ToMillis, UnitArithmetic) {
    EXPECT_EQ(to_millis(10, TimeUnit::minutes), 600'000);
    EXPECT_EQ(to_millis(0, TimeUnit::hours), 0);
    EXPECT_EQ(to_millis(120, TimeUnit::days), 10'368'000'000);
    EXPECT_EQ(to_millis(1, TimeUnit::seconds), 1000);
    EXPECT_EQ(to_millis(1, TimeUnit::hours), 3'600'000);
}

TEST(ToMillis, OverflowIsRangeError) {
    EXPECT_THROW(to_millis(INT64_MAX / 1000 + 1, TimeUnit::seconds), RangeError);
    EXPECT_THROW(to_millis(INT64_MAX, TimeUnit::days), RangeError);
    EXPECT_NO_THROW(to_millis(INT64_MAX / 86'400'000, TimeUnit::days));
}

TEST(ToMillis, NegativeIsContractError) { EXPECT_THROW(to_millis(-1, TimeUnit::seconds), ContractError); }

TEST(ParseDuration, Suffixes) {
    EXPECT_EQ(parse_duration("250ms"), 250);
    EXPECT_EQ(parse_duration("250"), 250);
    EXPECT_EQ(parse_duration("10s"), 10'000);
    EXPECT_EQ(parse_duration("2m"), 120'000);
    EXPECT_EQ(parse_duration("2min"), 120'000);
    EXPECT_EQ(parse_duration("1h"), 3'600'000);
    EXPECT_EQ(parse_duration("3d"), 3 * 86'400'000LL);
    EXPECT_EQ(parse_duration("2 Seconds"), 2000);
    EXPECT_EQ(parse_duration("1 day"), 86'400'000);
    EXPECT_THROW(parse_duration("ten"), ContractError);
    EXPECT_THROW(parse_duration("5w"), ContractError);
    EXPECT_THROW(parse_duration(""), ContractError);
}

TEST(BucketOf, Examples) {
    EXPECT_EQ(bucket_of(Timestamp{90'000}, 60'000, Timestamp{0}), (Interval{Timestamp{60'000}, Timestamp{120'000}}));
    EXPECT_EQ(bucket_of(Timestamp{0}, 1000, Timestamp{0}), (Interval{Timestamp{0}, Timestamp{1000}}));
    EXPECT_EQ(bucket_of(Timestamp{119'999}, 60'000, Timestamp{0}), (Interval{Timestamp{60'000}, Timestamp{120'000}}));
}

TEST(BucketOf, PreconditionsAreContractErrors) {
    EXPECT_THROW(bucket_of(Timestamp{5}, 0, Timestamp{0}), ContractError);
    EXPECT_THROW(bucket_of(Timestamp{5}, -3, Timestamp{0}), ContractError);
    EXPECT_THROW(bucket_of(Timestamp{5}, 10, Timestamp{6}), ContractError);
}

TEST(BucketOf, PartitionProperty) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<Millis> origin(0, 1'000'000);
    std::uniform_int_distribution<Millis> width(1, 100'000);
    std::uniform_int_distribution<Millis> off(0, 10'000'000);
    for (int i = 0; i < 20'000; ++i) {
        const Timestamp o{origin(rng)};
        const Millis w = width(rng);
        const Timestamp t = o + off(rng);
        const auto b = bucket_of(t, w, o);
        ASSERT_TRUE(b.contains(t));
        ASSERT_EQ(b.length(), w);
        ASSERT_EQ((b.start - o) % w, 0);
        // Neighbouring buckets share no timestamp.
        ASSERT_FALSE(b.contains(b.end));
        if (b.start > o) {
            ASSERT_EQ(bucket_of(b.start - 1, w, o).end, b.start);
        }
    }
}

TEST(Interval, HalfOpen) {
    Interval i{Timestamp{10}, Timestamp{20}};
    EXPECT_TRUE(i.contains(Timestamp{10}));
    EXPECT_TRUE(i.contains(Timestamp{19}));
    EXPECT_FALSE(i.contains(Timestamp{20}));
    EXPECT_FALSE(i.contains(Timestamp{9}));
    EXPECT_EQ(i.length(), 10);
    EXPECT_TRUE((Interval{Timestamp{5}, Timestamp{5}}.empty()));
}

TEST(Timestamp, SaturatingSubClampsAtEpoch) {
    EXPECT_EQ(saturating_sub(Timestamp{100}, 30), Timestamp{70});
    EXPECT_EQ(saturating_sub(Timestamp{100}, 300), Timestamp{0});
    EXPECT_LT(Timestamp{1}, Timestamp{2});
    EXPECT_EQ(Timestamp{5} - Timestamp{2}, 3);
}

TEST(Value, OnlyNumbersAreNumeric) {
    EXPECT_EQ(as_number(Value{std::int64_t{3}}), 3.0);
    EXPECT_EQ(as_number(Value{2.5}), 2.5);
    EXPECT_FALSE(as_number(Value{std::string("x")}));
    EXPECT_FALSE(as_number(Value{'c'}));
}

TEST(Tuple, Validate) {
    Tuple t;
    EXPECT_THROW(t.validate(), ContractError);
    t.attributes.emplace("a", 1.0);
    EXPECT_NO_THROW(t.validate());
    t.ts = Timestamp{-1};
    EXPECT_THROW(t.validate(), ContractError);
}

TEST(SeriesRef, ToStringAndOrder) {
    SeriesRef a{"influxdb", "neubot", "speedtest"};
    EXPECT_EQ(a.to_string(), "influxdb/neubot/speedtest");
    SeriesRef b{"influxdb", "neubot", "speedtests"};
    EXPECT_LT(a, b);
}

}// namespace
}// namespace hstream

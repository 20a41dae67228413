// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tsup/warp.hpp"

using namespace tsup;

TEST(CompensateJitter, EqualJittersAreIdentity) {
    std::mt19937 rng(3);
    Raster mv = oracle::random_raster(rng, 2, 4, 4);
    JitterOffset j{0.25f, -0.125f};
    EXPECT_TRUE(compensate_jitter(mv, j, j).bitwise_equal(mv));
}

TEST(CompensateJitter, StaticSceneConstantCorrection) {
    Raster mv(2, 3, 3);
    Raster out = compensate_jitter(mv, JitterOffset{0.25f, 0.0f}, JitterOffset{-0.25f, 0.0f});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            EXPECT_EQ(out.at(0, y, x), 0.5f);
            EXPECT_EQ(out.at(1, y, x), 0.0f);
        }
}

TEST(CompensateJitter, MatchesElementwiseOracleAndNegates) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> jd(-0.5f, 0.5f);
    for (int trial = 0; trial < 20; ++trial) {
        Raster mv = oracle::random_raster(rng, 2, 5, 6);
        JitterOffset a{jd(rng), jd(rng)}, b{jd(rng), jd(rng)};
        Raster out = compensate_jitter(mv, a, b);
        const float dx = a.x - b.x, dy = a.y - b.y;
        const std::size_t plane = 30;
        for (std::size_t i = 0; i < plane; ++i) {
            EXPECT_EQ(out.channel(0)[i], mv.channel(0)[i] + dx);
            EXPECT_EQ(out.channel(1)[i], mv.channel(1)[i] + dy);
        }
        // swapped jitters: correction term is the exact negation
        Raster zero(2, 5, 6);
        Raster fwd = compensate_jitter(zero, a, b);
        Raster swp = compensate_jitter(zero, b, a);
        for (std::size_t i = 0; i < fwd.size(); ++i) EXPECT_EQ(fwd[i], -swp[i]);
    }
}

TEST(DilateMv, UniformFieldsGiveConstantScaled) {
    Raster mv(2, 4, 4);
    mv.fill(0.0f);
    for (std::size_t i = 0; i < 16; ++i) mv.channel(0)[i] = 0.75f;
    for (std::size_t i = 0; i < 16; ++i) mv.channel(1)[i] = -0.25f;
    Raster depth = Raster::full(1, 4, 4, 0.3f);
    Raster out = dilate_mv(mv, depth, 2);
    ASSERT_EQ(out.height(), 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            EXPECT_EQ(out.at(0, y, x), 1.5f);
            EXPECT_EQ(out.at(1, y, x), -0.5f);
        }
}

TEST(DilateMv, FrontmostPixelWins) {
    // one 8x8 HR tile over a 2x2 LR footprint at S=4
    Raster mv(2, 2, 2);
    Raster depth(1, 2, 2);
    const float depths[4] = {0.9f, 0.1f, 0.5f, 0.7f};
    for (int i = 0; i < 4; ++i) {
        depth[i] = depths[i];
        mv.channel(0)[i] = float(i + 1);
        mv.channel(1)[i] = -float(i + 1);
    }
    Raster out = dilate_mv(mv, depth, 4);
    // index 1 has minimum depth 0.1; its MV is (2,-2), scaled by 4
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            EXPECT_EQ(out.at(0, y, x), 8.0f);
            EXPECT_EQ(out.at(1, y, x), -8.0f);
        }
}

TEST(DilateMv, TieBreaksToSmallestRowMajorIndex) {
    Raster mv(2, 2, 2);
    Raster depth = Raster::full(1, 2, 2, 0.5f);
    for (int i = 0; i < 4; ++i) mv.channel(0)[i] = float(i);
    Raster out = dilate_mv(mv, depth, 4);
    EXPECT_EQ(out.at(0, 0, 0), 0.0f);
}

TEST(DilateMv, MatchesBruteForceOracleExactly) {
    std::mt19937 rng(11);
    for (int s : {2, 4, 3}) {
        for (int trial = 0; trial < 10; ++trial) {
            const int h = 16, w = 16;
            Raster mv = oracle::random_raster(rng, 2, h, w, -3.0f, 3.0f);
            Raster depth = oracle::random_raster(rng, 1, h, w, 0.0f, 1.0f);
            Raster got = dilate_mv(mv, depth, s);
            Raster want = oracle::dilate_mv(mv, depth, s);
            EXPECT_TRUE(got.bitwise_equal(want)) << "scale " << s << " trial " << trial;
        }
    }
}

TEST(DilateMv, PiecewiseConstantOnTiles) {
    std::mt19937 rng(13);
    Raster mv = oracle::random_raster(rng, 2, 12, 12, -2.0f, 2.0f);
    Raster depth = oracle::random_raster(rng, 1, 12, 12, 0.0f, 1.0f);
    Raster out = dilate_mv(mv, depth, 2);
    for (int c = 0; c < 2; ++c)
        for (int ty = 0; ty < 3; ++ty)
            for (int tx = 0; tx < 3; ++tx) {
                const float v = out.at(c, ty * 8, tx * 8);
                for (int y = ty * 8; y < ty * 8 + 8; ++y)
                    for (int x = tx * 8; x < tx * 8 + 8; ++x)
                        EXPECT_EQ(out.at(c, y, x), v);
            }
}

TEST(DilateMv, DimMismatchThrows) {
    Raster mv(2, 4, 4);
    Raster depth(1, 4, 5);
    EXPECT_THROW(dilate_mv(mv, depth, 2), ConfigError);
}

TEST(UpsampleMvNearest, ReplicatesAndScales) {
    Raster mv(2, 2, 2);
    for (int i = 0; i < 4; ++i) {
        mv.channel(0)[i] = float(i);
        mv.channel(1)[i] = -float(i);
    }
    Raster out = upsample_mv_nearest(mv, 2);
    ASSERT_EQ(out.height(), 4);
    EXPECT_EQ(out.at(0, 0, 0), 0.0f);
    EXPECT_EQ(out.at(0, 0, 1), 0.0f);
    EXPECT_EQ(out.at(0, 0, 2), 2.0f);
    EXPECT_EQ(out.at(0, 3, 3), 6.0f);
    EXPECT_EQ(out.at(1, 3, 3), -6.0f);
}

TEST(Reproject, ZeroMotionIsBitwiseIdentity) {
    std::mt19937 rng(17);
    Raster color = oracle::random_raster(rng, 3, 8, 8, 0.0f, 1.0f);
    Raster feat = oracle::random_raster(rng, 1, 8, 8, 0.0f, 1.0f);
    Raster mv(2, 8, 8);
    WarpedHistory wh = reproject(color, feat, mv, 2);
    EXPECT_TRUE(wh.color.bitwise_equal(color));
    EXPECT_TRUE(wh.feat.bitwise_equal(feat));
    EXPECT_TRUE(wh.packed.bitwise_equal(space_to_depth(concat_channels(color, feat), 2)));
}

TEST(Reproject, BackwardFlowMovesContentForward) {
    // single bright pixel at (y=2, x=3); mv = (-1, 0) everywhere
    Raster color(3, 6, 6);
    color.at(0, 2, 3) = 1.0f;
    Raster feat(1, 6, 6);
    Raster mv(2, 6, 6);
    for (std::size_t i = 0; i < 36; ++i) mv.channel(0)[i] = -1.0f;
    WarpedHistory wh = reproject(color, feat, mv, 2);
    EXPECT_EQ(wh.color.at(0, 2, 4), 1.0f); // moved one column right
    EXPECT_EQ(wh.color.at(0, 2, 3), 0.0f);
}

TEST(Reproject, MatchesBilinearCompositionOracle) {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        Raster color = oracle::random_raster(rng, 3, 8, 8, 0.0f, 1.0f);
        Raster feat = oracle::random_raster(rng, 1, 8, 8, 0.0f, 1.0f);
        Raster mv = oracle::random_raster(rng, 2, 8, 8, -2.5f, 2.5f);
        WarpedHistory wh = reproject(color, feat, mv, 2);
        Raster pos(2, 8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                pos.at(0, y, x) = float(x) + mv.at(0, y, x);
                pos.at(1, y, x) = float(y) + mv.at(1, y, x);
            }
        Raster both = concat_channels(color, feat);
        Raster want = oracle::bilinear_sample(both, pos);
        EXPECT_LE(oracle::max_abs_diff(concat_channels(wh.color, wh.feat), want), 1e-6)
            << "trial " << trial;
    }
}

TEST(WarpPipeline, EqualsManualStageComposition) {
    std::mt19937 rng(23);
    Raster mv = oracle::random_raster(rng, 2, 6, 6, -1.0f, 1.0f);
    Raster depth = oracle::random_raster(rng, 1, 6, 6, 0.0f, 1.0f);
    Raster color = oracle::random_raster(rng, 3, 12, 12, 0.0f, 1.0f);
    Raster feat = oracle::random_raster(rng, 1, 12, 12, 0.0f, 1.0f);
    JitterOffset jp{0.25f, -0.25f}, jc{-0.125f, 0.375f};

    WarpedHistory got = warp_pipeline(mv, depth, jp, jc, color, feat, 2);

    Raster adjusted = compensate_jitter(mv, jp, jc);
    Raster mv_hr = dilate_mv(adjusted, depth, 2);
    WarpedHistory want = reproject(color, feat, mv_hr, 2);
    EXPECT_TRUE(got.color.bitwise_equal(want.color));
    EXPECT_TRUE(got.feat.bitwise_equal(want.feat));
    EXPECT_TRUE(got.packed.bitwise_equal(want.packed));

    // dilation-off path swaps in nearest upsampling
    WarpedHistory off = warp_pipeline(mv, depth, jp, jc, color, feat, 2, false);
    WarpedHistory off_want = reproject(color, feat, upsample_mv_nearest(adjusted, 2), 2);
    EXPECT_TRUE(off.color.bitwise_equal(off_want.color));
}

TEST(JitterOffsetValidation, RangeEnforced) {
    JitterOffset ok{0.5f, -0.5f};
    EXPECT_NO_THROW(ok.validate());
    JitterOffset bad{0.6f, 0.0f};
    EXPECT_THROW(bad.validate(), DataError);
}

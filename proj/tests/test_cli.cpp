#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "mg/nldr.hpp"
#include "mg/recon.hpp"
#include "mg/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / "mg_cli" / info->name();
        fs::remove_all(dir);
        fs::create_directories(dir);
    }

    Outcome mgen(const std::string& args) const {
        const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
        const std::string cmd = std::string(MGEN_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
    }

    std::string p(const std::string& rel) const { return (dir / rel).string(); }

    void expect_ok(const Outcome& r) const { ASSERT_EQ(r.code, 0) << r.err; }

    // One JSON object on one line, carrying the expected error kind.
    static void expect_error(const Outcome& r, int code, const std::string& kind) {
        EXPECT_EQ(r.code, code) << r.err;
        ASSERT_FALSE(r.err.empty());
        EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
        const json j = json::parse(r.err);
        EXPECT_EQ(j.at("error"), kind) << r.err;
    }

    // Every listed file exists and its recorded hash matches.
    static void expect_manifest_valid(const fs::path& out) {
        const json m = json::parse(slurp(out / "manifest.json"));
        for (const auto& [stage, s] : m.at("stages").items()) {
            EXPECT_TRUE(s.at("seconds").is_number()) << stage;
            for (const auto& [file, hash] : s.at("files").items()) {
                const fs::path f = fs::path(file).is_absolute() ? fs::path(file) : out / file;
                ASSERT_TRUE(fs::exists(f)) << f;
                const std::string bytes = slurp(f);
                std::ostringstream h;
                h << std::hex << std::setw(16) << std::setfill('0') << mg::fnv1a64(bytes);
                EXPECT_EQ(h.str(), hash.get<std::string>()) << f;
            }
        }
    }

    void make_shapes(const std::string& out, std::size_t n, std::size_t side = 16) const {
        expect_ok(mgen("make-dataset --kind shapes --n " + std::to_string(n) + " --height " + std::to_string(side) +
                       " --width " + std::to_string(side) + " --seed 2 -o " + p(out)));
    }
};

json without_seconds(json j) {
    j.erase("seconds");
    return j;
}

}  // namespace

TEST_F(Cli, EmbedIsomapSwissRoll) {
    expect_ok(mgen("make-dataset --kind swiss_roll --n 300 --file swiss.mgt -o " + p("run")));
    const Outcome r = mgen("embed --method isomap --k 10 --dim 2 --input " + p("run/swiss.mgt") + " -o " + p("run"));
    expect_ok(r);
    const json s = json::parse(r.out);
    EXPECT_TRUE(s.at("diagnostics").contains("residual_variance"));
    EXPECT_EQ(s.at("d"), 2);
    const auto e = mg::load_embedding(dir / "run" / "embedding.mgt");
    EXPECT_EQ(e.coords.shape(), (mg::Shape{300, 2}));
    expect_manifest_valid(dir / "run");
}

TEST_F(Cli, EmbedTsneThreeDims) {
    make_shapes("run", 120);
    const Outcome r = mgen("embed --method tsne --perplexity 30 --dim 3 --iterations 300 --input " + p("run/dataset.mgt") +
                       " -o " + p("run"));
    expect_ok(r);
    EXPECT_TRUE(json::parse(r.out).at("diagnostics").contains("kl"));
    EXPECT_EQ(mg::load_embedding(dir / "run" / "embedding.mgt").dim(), 3u);
}

TEST_F(Cli, ErrorsAreSingleLineJsonWithExitCodes) {
    expect_error(mgen("embed --method isomap --input " + p("missing.mgt") + " -o " + p("run")), 2, "FormatError");
    expect_error(mgen("embed --method pca --input x -o " + p("run")), 2, "FormatError");
    expect_error(mgen("frobnicate"), 2, "UsageError");
    expect_error(mgen("embed --k notanumber"), 2, "UsageError");
    make_shapes("run", 40);
    // A k-NN graph on 40 points with k = 1 falls apart into components.
    expect_error(mgen("embed --method isomap --k 1 --input " + p("run/dataset.mgt") + " -o " + p("run")), 1,
                 "ConnectivityError");
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
    make_shapes("run", 80);
    {
        std::ofstream f(dir / "cfg.json");
        f << json{{"method", {{"name", "lle"}, {"k", 5}, {"dim", 3}}}}.dump();
    }
    expect_ok(mgen("embed --config " + p("cfg.json") + " --k 12 --input " + p("run/dataset.mgt") + " -o " + p("run")));
    const auto e = mg::load_embedding(dir / "run" / "embedding.mgt");
    EXPECT_EQ(e.method, mg::Method::LLE);
    EXPECT_EQ(e.dim(), 3u);
    EXPECT_EQ(e.hyper.at("k"), 12);
    const json m = json::parse(slurp(dir / "run" / "manifest.json"));
    EXPECT_EQ(m.at("stages").at("embed").at("config").at("method").at("k"), 12);
}

TEST_F(Cli, TrainDecoderReportGridAndDeterminism) {
    make_shapes("a", 512);
    expect_ok(mgen("embed --method le --k 10 --dim 3 --input " + p("a/dataset.mgt") + " -o " + p("a")));
    const std::string train = " --arch paper_conv --widths 16 8 8 --epochs 2 --seed 5 --input " + p("a/dataset.mgt");
    expect_ok(mgen("train-decoder --embedding " + p("a/embedding.mgt") + train + " -o " + p("a")));
    expect_ok(mgen("train-decoder --embedding " + p("a/embedding.mgt") + train + " -o " + p("b")));
    const json ra = json::parse(slurp(dir / "a" / "decoder_report.json"));
    for (const char* k : {"val_mse", "val_psnr", "val_ssim"}) EXPECT_TRUE(ra.at(k).is_number()) << k;
    EXPECT_EQ(without_seconds(ra), without_seconds(json::parse(slurp(dir / "b" / "decoder_report.json"))));
    for (const char* f : {"decoder.ckpt.json", "decoder.ckpt.json.params.mgt", "decoder_recon.pgm"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    // 16 validation pairs at 8 per row: 4 rows of 16-pixel tiles.
    EXPECT_EQ(slurp(dir / "a" / "decoder_recon.pgm").rfind("P5\n128 64\n255\n", 0), 0u);
    expect_manifest_valid(dir / "a");
}

TEST_F(Cli, BothArchitecturesAcceptAnyEmbeddingDim) {
    make_shapes("run", 64, 8);
    for (int d : {1, 3, 7}) {
        expect_ok(mgen("embed --method isomap --k 12 --dim " + std::to_string(d) + " --input " + p("run/dataset.mgt") +
                       " -o " + p("run")));
        for (const char* arch : {"dense", "paper_conv"})
            expect_ok(mgen(std::string("train-decoder --epochs 1 --widths 8 8 8 --arch ") + arch + " --input " +
                           p("run/dataset.mgt") + " -o " + p("run")));
    }
    expect_error(mgen("train-decoder --epochs 1 --arch resnet --input " + p("run/dataset.mgt") + " -o " + p("run")), 2,
                 "ConfigError");
}

TEST_F(Cli, MisalignedInputs) {
    make_shapes("a", 64);
    make_shapes("b", 48);
    expect_ok(mgen("embed --method isomap --k 10 --input " + p("a/dataset.mgt") + " -o " + p("a")));
    expect_error(mgen("train-decoder --epochs 1 --embedding " + p("a/embedding.mgt") + " --input " +
                      p("b/dataset.mgt") + " -o " + p("b")),
                 1, "AlignmentError");
}

TEST_F(Cli, DiffusionAndSampling) {
    make_shapes("run", 128);
    expect_ok(mgen("embed --method isomap --k 10 --dim 2 --input " + p("run/dataset.mgt") + " -o " + p("run")));
    expect_ok(mgen("train-decoder --arch dense --widths 32 --epochs 2 --input " + p("run/dataset.mgt") + " -o " +
                   p("run")));
    const Outcome t = mgen("train-diffusion --epochs 2 --hidden 16 16 -o " + p("run"));
    expect_ok(t);
    EXPECT_NE(t.err.find("standardiz"), std::string::npos);
    const std::string dec = " --decoder " + p("run/decoder.ckpt.json");
    expect_ok(mgen("sample --n 64 --seed 9 --denoiser " + p("run/denoiser.ckpt.json") + dec + " -o " + p("s1")));
    expect_ok(mgen("sample --n 64 --seed 9 --denoiser " + p("run/denoiser.ckpt.json") + dec + " -o " + p("s2")));
    EXPECT_EQ(slurp(dir / "s1" / "samples.pgm").rfind("P5\n128 128\n255\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "s1" / "samples.pgm"), slurp(dir / "s2" / "samples.pgm"));
    EXPECT_EQ(slurp(dir / "s1" / "samples.mgt"), slurp(dir / "s2" / "samples.mgt"));
    const json m = json::parse(slurp(dir / "s1" / "manifest.json"));
    EXPECT_TRUE(m.at("stages").at("sample").at("steps").at("sample").is_number());
    expect_manifest_valid(dir / "s1");
    expect_manifest_valid(dir / "run");

    expect_ok(mgen("sample --untrained --hidden 8 8 --n 16 --embedding " + p("run/embedding.mgt") + dec + " -o " +
                   p("u")));
    EXPECT_TRUE(fs::exists(dir / "u" / "samples.pgm"));
    expect_error(mgen("sample --n 4 --denoiser " + p("run/denoiser.ckpt.json") + " -o " + p("s3")), 2, "ConfigError");
}

TEST_F(Cli, TrainAutoencoder) {
    make_shapes("run", 96);
    const Outcome r = mgen("train-ae --latent 8 --epochs 1 --input " + p("run/dataset.mgt") + " -o " + p("run"));
    expect_ok(r);
    const auto rep = mg::report_from_json(json::parse(slurp(dir / "run" / "autoencoder_report.json")));
    EXPECT_EQ(rep.model, "autoencoder");
    EXPECT_TRUE(fs::exists(dir / "run" / "autoencoder_recon.pgm"));
}

TEST_F(Cli, EvaluateSortsAscending) {
    const std::vector<std::pair<std::string, double>> rows{
        {"tsne", 0.127}, {"autoencoder", 0.017}, {"lle", 0.05}, {"isomap", 0.04}, {"le", 0.06}};
    std::string args;
    for (const auto& [model, mse] : rows) {
        mg::ReconReport r;
        r.model = model;
        r.val_mse = mse;
        r.val_psnr = 20;
        r.val_ssim = 0.5;
        r.train_loss = r.val_loss = {mse};
        const fs::path f = dir / (model + ".json");
        std::ofstream(f) << mg::to_json(r).dump();
        args += " " + f.string();
    }
    const Outcome r = mgen("evaluate" + args + " -o " + p("ev"));
    expect_ok(r);
    const json t = json::parse(slurp(dir / "ev" / "evaluation.json")).at("rows");
    ASSERT_EQ(t.size(), 5u);
    const std::vector<std::string> order{"autoencoder", "isomap", "lle", "le", "tsne"};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(t[i].at("model"), order[i]);
    EXPECT_LT(r.out.find("autoencoder"), r.out.find("tsne"));

    expect_ok(mgen("evaluate " + p("lle.json") + " -o " + p("one")));
    EXPECT_EQ(json::parse(slurp(dir / "one" / "evaluation.json")).at("rows").size(), 1u);

    std::ofstream(dir / "broken.json") << "{\"model\": ";
    const Outcome bad = mgen("evaluate " + p("broken.json") + " -o " + p("ev"));
    expect_error(bad, 2, "FormatError");
    EXPECT_NE(bad.err.find("broken.json"), std::string::npos);
    expect_error(mgen("evaluate -o " + p("ev")), 2, "ConfigError");
}

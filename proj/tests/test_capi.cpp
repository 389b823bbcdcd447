#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include "railseg.h"

namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& leaf) {
    const std::string dir = (fs::temp_directory_path() / ("railseg_capi_" + leaf)).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("version and error strings exist") {
    CHECK(railseg_version() != nullptr);
    CHECK(railseg_last_error() != nullptr);
}

TEST_CASE("config handle: defaults, set/get, save/load") {
    railseg_config* c = railseg_config_create();
    REQUIRE(c != nullptr);

    char buf[128];
    REQUIRE(railseg_config_get(c, "encoder.k", buf, sizeof(buf)) == RAILSEG_OK);
    CHECK(std::string(buf) == "4");
    REQUIRE(railseg_config_get(c, "train.lr", buf, sizeof(buf)) == RAILSEG_OK);
    CHECK(std::string(buf) == "0.001");

    CHECK(railseg_config_set(c, "train.epochs", "3") == RAILSEG_OK);
    REQUIRE(railseg_config_get(c, "train.epochs", buf, sizeof(buf)) == RAILSEG_OK);
    CHECK(std::string(buf) == "3");

    CHECK(railseg_config_set(c, "no.such.key", "1") == RAILSEG_ERR_USAGE);
    CHECK(std::strlen(railseg_last_error()) > 0);
    CHECK(railseg_config_set(c, "train.lr", "not_a_number") == RAILSEG_ERR_USAGE);

    char tiny[2];
    CHECK(railseg_config_get(c, "train.lr", tiny, sizeof(tiny)) == RAILSEG_ERR_USAGE);

    const std::string dir = temp_dir("cfg");
    CHECK(railseg_config_save(c, (dir + "/a.cfg").c_str()) == RAILSEG_OK);
    railseg_config* loaded = railseg_config_load((dir + "/a.cfg").c_str());
    REQUIRE(loaded != nullptr);
    REQUIRE(railseg_config_get(loaded, "train.epochs", buf, sizeof(buf)) == RAILSEG_OK);
    CHECK(std::string(buf) == "3");
    railseg_config_destroy(loaded);
    railseg_config_destroy(c);

    CHECK(railseg_config_load("/no/such/path.cfg") == nullptr);
    CHECK(std::strlen(railseg_last_error()) > 0);
}

TEST_CASE("null arguments are usage errors") {
    CHECK(railseg_config_set(nullptr, "a", "b") == RAILSEG_ERR_USAGE);
    CHECK(railseg_synth(nullptr, "x", 1, "straight=1", 0) == RAILSEG_ERR_USAGE);
    railseg_config* c = railseg_config_create();
    CHECK(railseg_train(c, nullptr, "out", nullptr, nullptr) == RAILSEG_ERR_USAGE);
    railseg_config_destroy(c);
}

TEST_CASE("synth then train then infer then eval through the C surface") {
    const std::string root = temp_dir("e2e");
    railseg_config* c = railseg_config_create();
    REQUIRE(c != nullptr);
    // keep it quick
    railseg_config_set(c, "partition.d_alpha_deg", "2");
    railseg_config_set(c, "partition.d_beta_deg", "2");
    railseg_config_set(c, "partition.d_r", "2");
    railseg_config_set(c, "synth.pitch_samples", "60");
    railseg_config_set(c, "synth.horiz_samples", "150");
    railseg_config_set(c, "train.epochs", "1");
    railseg_config_set(c, "train.augment", "false");
    railseg_config_set(c, "run.deterministic", "true");

    CHECK(railseg_synth(c, (root + "/data").c_str(), 2, "straight=1.0", 9) == RAILSEG_OK);
    CHECK(fs::exists(root + "/data/frame_00001.rpcf"));

    CHECK(railseg_synth(c, (root + "/none").c_str(), 0, "straight=1.0", 9) ==
          RAILSEG_ERR_USAGE);
    CHECK(railseg_synth(c, (root + "/badmix").c_str(), 1, "upside=1.0", 9) ==
          RAILSEG_ERR_USAGE);

    CHECK(railseg_train(c, (root + "/data").c_str(), (root + "/m.rrck").c_str(), nullptr,
                        nullptr) == RAILSEG_OK);
    CHECK(railseg_infer(c, (root + "/m.rrck").c_str(), (root + "/data").c_str(),
                        (root + "/pred").c_str()) == RAILSEG_OK);
    CHECK(railseg_eval(c, (root + "/pred").c_str(), (root + "/data").c_str(),
                       (root + "/m.csv").c_str()) == RAILSEG_OK);

    // data errors surface as status 2
    CHECK(railseg_train(c, (root + "/empty_dir_missing").c_str(), (root + "/x.rrck").c_str(),
                        nullptr, nullptr) == RAILSEG_ERR_DATA);
    CHECK(railseg_infer(c, (root + "/m.rrck").c_str(), (root + "/nothing").c_str(),
                        (root + "/pred2").c_str()) == RAILSEG_ERR_DATA);

    // corrupt checkpoint is a data error, not a crash
    {
        FILE* f = std::fopen((root + "/broken.rrck").c_str(), "wb");
        std::fwrite("RRCK\x01", 1, 5, f);
        std::fclose(f);
    }
    CHECK(railseg_infer(c, (root + "/broken.rrck").c_str(), (root + "/data").c_str(),
                        (root + "/pred3").c_str()) == RAILSEG_ERR_DATA);

    railseg_config_destroy(c);
}

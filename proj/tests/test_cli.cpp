#include "wkam/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wkam;
namespace fs = std::filesystem;

namespace {

struct Run {
	int code = 0;
	std::string out, err;
};

Run run(std::vector<std::string> args)
{
	args.insert(args.begin(), "wkam");
	std::vector<const char *> argv;
	for (const auto &a : args) argv.push_back(a.c_str());
	std::ostringstream out, err;
	Run r;
	r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
	r.out = out.str();
	r.err = err.str();
	return r;
}

fs::path scratch(const std::string &name)
{
	const fs::path p = fs::temp_directory_path() / ("wkam_cli_test_" + name);
	fs::remove_all(p);
	return p;
}

std::string preset(const std::string &name) { return std::string(WKAM_PRESET_DIR) + "/" + name + ".cfg"; }

std::string slurp(const fs::path &p)
{
	std::ifstream in(p, std::ios::binary);
	return std::string(std::istreambuf_iterator<char>(in), {});
}

nlohmann::json summary(const fs::path &dir)
{
	std::ifstream in(dir / "summary.json");
	return nlohmann::json::parse(in);
}

} // namespace

TEST_SUITE("cli")
{
	TEST_CASE("config files")
	{
		RunConfig c;
		std::istringstream in("# comment\nn = 12   # trailing\n\nobservable = distsq\nliv_c=3.5\n");
		apply_config_file(c, in);
		CHECK(c.n == 12);
		CHECK(c.observable == "distsq");
		CHECK(c.liv_c == 3.5);
		CHECK_NOTHROW(validate(c));

		std::istringstream unknown("grid = 3\n");
		CHECK_THROWS_WITH_AS(apply_config_file(c, unknown), doctest::Contains("unknown key"), ConfigError);
		std::istringstream no_eq("n 12\n");
		CHECK_THROWS_WITH_AS(apply_config_file(c, no_eq), doctest::Contains("line 1"), ConfigError);
		CHECK_THROWS_AS(set_config_value(c, "n", "twelve"), ConfigError);
		CHECK_THROWS_AS(set_config_value(c, "c", "nan"), ConfigError);

		// Every key reads back what was written.
		const RunConfig d;
		RunConfig e;
		for (const auto &[k, v] : config_values(d)) set_config_value(e, k, v);
		CHECK(config_values(e) == config_values(d));
		CHECK(config_keys().size() == config_values(d).size());
	}

	TEST_CASE("validation")
	{
		RunConfig c;
		c.tol = -1;
		CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("tol > 0"), ConfigError);
		c = RunConfig{};
		c.ns = 8;
		CHECK_THROWS_AS(validate(c), ConfigError);
		c = RunConfig{};
		c.matrix = "1,0,0,1";
		CHECK_THROWS_AS(validate(c), ConfigError);
		c = RunConfig{};
		c.reg_eps = 0.3;
		CHECK_THROWS_AS(validate(c), ConfigError);
		c = RunConfig{};
		c.observable = "cubic";
		CHECK_THROWS_AS(validate(c), ConfigError);
	}

	TEST_CASE("presets")
	{
		for (const char *name : {"coboundary", "constant", "distsq", "mixed"}) {
			RunConfig c;
			std::ifstream in(preset(name));
			REQUIRE(in);
			apply_config_file(c, in);
			CHECK_NOTHROW(validate(c));
			CHECK(c.observable == name);
		}
		const Run bad = run({"--config", preset("malformed"), "solve"});
		CHECK(bad.code == 2);
		CHECK(bad.err.find("tol > 0") != std::string::npos);
	}

	TEST_CASE("usage errors")
	{
		CHECK(run({"--help"}).code == 0);
		CHECK(run({}).code == 2);
		CHECK(run({"frobnicate"}).code == 2);
		CHECK(run({"verify", "everything"}).code == 2);
		CHECK(run({"solve", "--n", "many"}).code == 2);
	}

	TEST_CASE("config file values override flags")
	{
		const fs::path dir = scratch("override");
		fs::create_directories(dir);
		{
			std::ofstream cfg(dir / "run.cfg");
			cfg << "n = 8\nns = 10\nsamples = 100\nobservable = constant\nvalue = 0.25\nout = " << (dir / "out").string() << "\n";
		}
		const Run r = run({"--n", "32", "--config", (dir / "run.cfg").string(), "solve"});
		CHECK(r.code == 0);
		CHECK(summary(dir / "out")["config"]["n"] == "8");
	}

	TEST_CASE("solve is deterministic")
	{
		const fs::path a = scratch("det_a"), b = scratch("det_b");
		const std::vector<std::string> common{"solve", "--n", "12", "--ns", "10", "--samples", "500", "--seed", "3"};
		std::vector<std::string> ra = common, rb = common;
		ra.insert(ra.end(), {"--out", a.string()});
		rb.insert(rb.end(), {"--out", b.string()});
		const Run x = run(ra), y = run(rb);
		CHECK(x.code == 0);
		CHECK(y.code == 0);
		std::vector<std::string> files;
		for (const auto &f : fs::directory_iterator(a)) files.push_back(f.path().filename().string());
		CHECK(files.size() >= 7);
		for (const auto &f : files) {
			if (f == "summary.json") continue;
			CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
		}
		nlohmann::json ja = summary(a), jb = summary(b);
		ja["config"].erase("out");
		jb["config"].erase("out");
		CHECK(ja == jb);
		CHECK(ja["status"] == "pass");
	}

	TEST_CASE("table observables")
	{
		const fs::path dir = scratch("table");
		fs::create_directories(dir);
		RunConfig c;
		c.n = 8;
		c.ns = 10;
		c.samples = 200;
		c.observable = "table";
		c.table = (dir / "phi.csv").string();
		{
			std::ofstream t(c.table);
			write_grid_function(t, GridFunction(Grid(make_model(c), c.n, c.ns), 0.5));
		}
		const SolveResult r = run_solve(c, (dir / "out").string());
		CHECK(r.failed_stage.empty());
		CHECK(r.phi_bar == doctest::Approx(0.5).epsilon(1e-9));
		CHECK(r.pass);
		c.table = (dir / "missing.csv").string();
		CHECK_THROWS_AS(validate(c), ConfigError);
	}

	TEST_CASE("Livsic scan below C1 is reported as not guaranteed")
	{
		const fs::path dir = scratch("livsic");
		const Run r = run({"verify", "livsic", "--liv-c", "1", "--liv-paths", "200", "--out", dir.string()});
		CHECK(r.code == 0);
		CHECK(r.out.find("bound not guaranteed") != std::string::npos);
		CHECK(summary(dir)["status"] == "not_guaranteed");
		CHECK(fs::exists(dir / "livsic_families.csv"));
	}

	TEST_CASE("constants and atlas commands")
	{
		const fs::path dir = scratch("constants");
		const Run k = run({"constants", "--out", dir.string()});
		CHECK(k.code == 0);
		CHECK(k.out.find("C4") != std::string::npos);
		const fs::path ad = scratch("atlas");
		const Run a = run({"atlas", "--out", ad.string()});
		CHECK(a.code == 0);
		CHECK(fs::exists(ad / "atlas_boxes.csv"));
	}
}

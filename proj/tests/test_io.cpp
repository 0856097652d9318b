#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "fixtures.hpp"
#include "hydrocal/io.hpp"

using namespace hydrocal;

namespace {

void expect_same_network(const Network& a, const Network& b) {
  EXPECT_EQ(a.fluid().density, b.fluid().density);
  EXPECT_EQ(a.fluid().viscosity, b.fluid().viscosity);
  EXPECT_EQ(a.fluid().gravity, b.fluid().gravity);
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t n = 0; n < a.nodes().size(); ++n) {
    EXPECT_EQ(a.nodes()[n].id, b.nodes()[n].id);
    EXPECT_EQ(a.nodes()[n].kind, b.nodes()[n].kind);
    EXPECT_EQ(a.nodes()[n].elevation, b.nodes()[n].elevation);
  }
  ASSERT_EQ(a.n_pipes(), b.n_pipes());
  for (std::size_t p = 0; p < a.n_pipes(); ++p) {
    EXPECT_EQ(a.pipe(p).id, b.pipe(p).id);
    EXPECT_EQ(a.pipe(p).from, b.pipe(p).from);
    EXPECT_EQ(a.pipe(p).to, b.pipe(p).to);
    EXPECT_EQ(a.pipe(p).length, b.pipe(p).length);
    EXPECT_EQ(a.pipe(p).diameter, b.pipe(p).diameter);
    EXPECT_EQ(a.pipe(p).roughness, b.pipe(p).roughness);
  }
}

std::string data(const std::string& name) { return std::string(HYDROCAL_DATA_DIR) + "/" + name; }

}  // namespace

TEST(Io, NetworkRoundTrip) {
  for (bool rough : {true, false}) {
    const Network net = fixtures::three_cycle_network(rough);
    const std::vector<std::string> sensors = fixtures::three_cycle_sensors();
    const std::string text = io::dump(io::network_to_json(net, sensors));
    const io::NetworkFile back = io::network_from_json(io::parse_json(text));
    expect_same_network(net, back.network);
    EXPECT_EQ(back.sensors, sensors);
    EXPECT_EQ(io::dump(io::network_to_json(back.network, back.sensors)), text);
  }
}

TEST(Io, RandomValuesRoundTripExactly) {
  SplitMix64 rng(99);
  Network base = fixtures::three_cycle_network();
  for (int t = 0; t < 50; ++t) {
    std::vector<Node> nodes = base.nodes();
    for (Node& n : nodes)
      if (n.kind == NodeKind::inner) n.elevation = rng.uniform(-10.0, 100.0);
    std::vector<Pipe> pipes = base.pipes();
    for (Pipe& p : pipes) {
      p.length = rng.uniform(0.1, 1e4);
      p.diameter = rng.uniform(0.01, 2.0);
      p.roughness = rng.uniform(0.0, 0.1) * p.diameter;
    }
    const Network net(FluidProperties{rng.uniform(900, 1100), rng.uniform(1e-4, 1e-2), rng.uniform(9, 10)}, nodes,
                      pipes);
    expect_same_network(net, io::network_from_json(io::parse_json(io::dump(io::network_to_json(net)))).network);

    io::MeasurementFile mf;
    mf.sensors = fixtures::three_cycle_sensors();
    for (int i = 0; i < 3; ++i) {
      MeasurementSet m{Vector(5), Vector(1), Vector(3)};
      for (Eigen::Index k = 0; k < 5; ++k) m.demands(k) = rng.uniform(0.0, 1e-2);
      m.source_heads(0) = rng.uniform(0.0, 200.0);
      for (Eigen::Index r = 0; r < 3; ++r) m.sensed_heads(r) = rng.uniform(0.0, 200.0);
      mf.sets.push_back(m);
    }
    const io::MeasurementFile back =
        io::measurements_from_json(io::parse_json(io::dump(io::measurements_to_json(mf, net))), net);
    ASSERT_EQ(back.sets.size(), 3u);
    EXPECT_EQ(back.sensors, mf.sensors);
    for (int i = 0; i < 3; ++i) {
      EXPECT_EQ(back.sets[i].demands, mf.sets[i].demands);
      EXPECT_EQ(back.sets[i].source_heads, mf.sets[i].source_heads);
      EXPECT_EQ(back.sets[i].sensed_heads, mf.sets[i].sensed_heads);
    }
  }
}

TEST(Io, LoadsRoundTripAndArrayForm) {
  const Network net = fixtures::three_cycle_network();
  const auto loads = fixtures::three_cycle_loads();
  const auto back = io::loads_from_json(io::parse_json(io::dump(io::loads_to_json(loads, net))), net);
  ASSERT_EQ(back.size(), loads.size());
  for (std::size_t i = 0; i < loads.size(); ++i) {
    EXPECT_EQ(back[i].demands, loads[i].demands);
    EXPECT_EQ(back[i].source_heads, loads[i].source_heads);
  }
  const auto arr = io::loads_from_json(
      io::parse_json(R"({"loads": [{"demands": [0, 0.001, 0, 0, 0.002], "source_heads": [50]}]})"), net);
  EXPECT_EQ(arr[0].demands(4), 0.002);
  EXPECT_EQ(arr[0].source_heads(0), 50.0);
  EXPECT_THROW(io::loads_from_json(io::parse_json(R"({"loads": [{"demands": [0, 1], "source_heads": [50]}]})"), net),
               DimensionError);
  EXPECT_THROW(io::loads_from_json(io::parse_json(R"({"loads": [{"demands": {"9": 1}, "source_heads": [50]}]})"), net),
               ParseError);
  EXPECT_THROW(io::loads_from_json(io::parse_json(R"({"loads": [{"demands": {}, "source_heads": {}}]})"), net),
               ParseError);
}

TEST(Io, ParseErrorsCarryPosition) {
  try {
    (void)io::parse_json("{\n  \"nodes\": [\n    {\"id\": 1,, }\n  ]\n}", "net.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("net.json:3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::network_from_json(io::parse_json(R"({"nodes": []})")), ParseError);
  EXPECT_THROW(io::network_from_json(io::parse_json(R"({"nodes": [{"id": "a", "type": "tank"}], "pipes": []})")),
               ParseError);
  EXPECT_THROW(io::network_from_json(io::parse_json(
                   R"({"nodes": [{"id": "a"}], "pipes": [{"id": "p", "from": "a", "to": "a", "length": "x", "diameter": 1}]})")),
               ParseError);
  EXPECT_THROW(io::read_text("/nonexistent/file.json"), ParseError);
}

TEST(Io, PiezometricConversion) {
  const io::NetworkFile nf = io::read_network(data("three_cycle_network.json"));
  const io::MeasurementFile mf = io::read_measurements(data("three_cycle_published.json"), nf.network);
  EXPECT_EQ(mf.convention, io::HeadConvention::piezometric);
  const auto sets = io::pressure_sets(mf, nf.network);
  EXPECT_DOUBLE_EQ(sets[0].sensed_heads(0), 90.9743 - 10.0);
  EXPECT_DOUBLE_EQ(sets[0].sensed_heads(1), 90.8720 - 5.0);
  EXPECT_DOUBLE_EQ(sets[2].sensed_heads(2), 77.1594);
}

TEST(Io, SampleDataMatchesFixtures) {
  const io::NetworkFile nf = io::read_network(data("three_cycle_network.json"));
  expect_same_network(nf.network, fixtures::three_cycle_network());
  EXPECT_EQ(nf.sensors, fixtures::three_cycle_sensors());
  const io::NetworkFile two = io::read_network(data("two_loop_network.json"));
  EXPECT_TRUE(validate_network(two.network).empty());
  const auto loads = io::read_loads(data("three_cycle_loads.json"), nf.network);
  const auto ref = fixtures::three_cycle_loads();
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LE((loads[i].demands - ref[i].demands).lpNorm<Eigen::Infinity>(), 1e-18);
}

TEST(Io, DecisionVectorRoundTrip) {
  const Network net = fixtures::three_cycle_network(false);
  const SensorConfig sc(net, fixtures::three_cycle_sensors());
  std::vector<MeasurementSet> sets(3, MeasurementSet{Vector::Zero(5), Vector::Constant(1, 100.0), Vector::Zero(3)});
  const CalibrationProblem pb(net, sc, sets);
  SplitMix64 rng(1);
  Vector x(14);
  for (Eigen::Index j = 0; j < 14; ++j) x(j) = j < 8 ? rng.uniform(0, 2e-3) : rng.uniform(70, 100);
  const Vector back = io::decision_from_json(pb, io::parse_json(io::dump(io::decision_to_json(pb, x))));
  // Roughness passes through mm, so allow one rounding step each way.
  EXPECT_LE((back.head(8) - x.head(8)).lpNorm<Eigen::Infinity>(), 1e-18);
  EXPECT_EQ(back.tail(6), x.tail(6));
}

TEST(Io, CsvFormats) {
  EXPECT_EQ(io::fixed(1.23456, 4), "1.2346");
  EXPECT_EQ(io::full(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(io::full(1.0 / 3.0)), 1.0 / 3.0);
  ScanResult s;
  s.n_a = 1;
  s.n_b = 1;
  s.points.push_back({0.5, 0.0, 1.0, 2.0, 3.0});
  EXPECT_EQ(io::scan_csv(s), "a,b,v_L1,v_L2,v_Linf\n0.5,0,1,2,3\n");
}

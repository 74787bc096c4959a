#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "haptrain/clutch.hpp"
#include "haptrain/error.hpp"
#include "haptrain/rng.hpp"

#include <filesystem>

using namespace haptrain;

TEST_CASE("holding force") {
    ClutchModel m;
    CHECK(holding_force(m, 0) == 0.0);
    CHECK(holding_force(m, 300) == doctest::Approx(15.0));
    CHECK(holding_force(m, 400) / holding_force(m, 100) == 4.0);
    CHECK_THROWS_AS(holding_force(m, 401), RangeError);
    CHECK_THROWS_AS(holding_force(m, -1), RangeError);

    m.law = ForceLaw::Quadratic;
    CHECK(holding_force(m, 300) == doctest::Approx(15.0));
    CHECK(holding_force(m, 400) / holding_force(m, 100) == doctest::Approx(16.0));
}

TEST_CASE("disengagement transient") {
    ClutchModel m;
    const double f0 = holding_force(m, 300);
    CHECK(disengage_force_at(m, 300, 0.0) == f0);
    CHECK(disengage_force_at(m, 300, 0.040) == 0.1 * f0);
    CHECK(disengage_force_at(m, 300, 0.080) == 0.0);
    CHECK(disengage_force_at(m, 300, 1.0) == 0.0);
    double prev = f0;
    for (double e = 0.0; e <= 0.1; e += 0.001) {
        const double f = disengage_force_at(m, 300, e);
        CHECK(f <= prev + 1e-12);
        prev = f;
    }
}

TEST_CASE("bank force follows engage and release") {
    ClutchModel m;
    ClutchBank bank;
    bank.engage(ClutchSide::Dorsal, 300, 10.4);
    CHECK(bank.force(m, ClutchSide::Dorsal, 1.0) == doctest::Approx(15.0));
    CHECK(bank.force(m, ClutchSide::Ventral, 1.0) == 0.0);
    bank.release(ClutchSide::Dorsal, 1.0);
    CHECK(bank.force(m, ClutchSide::Dorsal, 1.04) == doctest::Approx(1.5));
    CHECK(bank.force(m, ClutchSide::Dorsal, 1.2) == 0.0);
}

TEST_CASE("restrain") {
    const auto cal = calibrate(30, 150, 7, 13);
    ClutchBank bank;
    CHECK(restrain(11.0, bank, cal).z == 11.0);
    CHECK_FALSE(restrain(11.0, bank, cal).limited);

    bank.engage(ClutchSide::Dorsal, 300, 10.4);
    CHECK(restrain(11.0, bank, cal, 0.05).z == doctest::Approx(10.45));
    CHECK(restrain(11.0, bank, cal, 0.05).limited);
    CHECK(restrain(9.0, bank, cal, 0.05).z == 9.0);  // extension is free

    ClutchBank v;
    v.engage(ClutchSide::Ventral, 300, 9.6);
    CHECK(restrain(9.0, v, cal, 0.05).z == doctest::Approx(9.55));
    CHECK(restrain(12.0, v, cal, 0.05).z == 12.0);

    ClutchBank both;
    both.engage(ClutchSide::Dorsal, 300, 10.0);
    both.engage(ClutchSide::Ventral, 300, 10.0);
    const auto r = restrain(12.0, both, cal, 0.05);
    CHECK(r.frozen);
    CHECK(r.z == doctest::Approx(10.05));
}

TEST_CASE("command encoding") {
    CHECK(encode_command(EngageCmd{ClutchSide::Dorsal, 300}) == "ENG D 300\n");
    CHECK(encode_command(DisengageCmd{ClutchSide::Ventral}) == "DIS V\n");
    CHECK(encode_command(PingCmd{}) == "PING\n");
    CHECK(std::get<DisengageCmd>(parse_command("DIS V\n")).side == ClutchSide::Ventral);
    CHECK_THROWS_AS(parse_command("ENG D 900\n"), RangeError);
    CHECK_THROWS_AS(parse_command("ENG D 0\n"), RangeError);
    CHECK_THROWS_AS(parse_command("ENG X 300\n"), ParseError);
    CHECK_THROWS_AS(parse_command("ENG D 300"), ParseError);
    CHECK_THROWS_AS(parse_command("ENG D 3OO\n"), ParseError);
    CHECK_THROWS_AS(parse_command("eng d 300\n"), ParseError);
    CHECK_THROWS_AS(parse_command("PING \n"), ParseError);
    CHECK_THROWS_AS(parse_command(""), ParseError);
}

TEST_CASE("command round trip over the whole grammar") {
    std::vector<ClutchCommand> all{PingCmd{}};
    for (auto side : {ClutchSide::Ventral, ClutchSide::Dorsal}) {
        all.push_back(DisengageCmd{side});
        for (int v = 1; v <= 400; ++v) all.push_back(EngageCmd{side, v});
    }
    for (const auto& c : all) {
        const auto line = encode_command(c);
        CHECK(parse_command(line) == c);
        CHECK(encode_command(parse_command(line)) == line);
    }
}

TEST_CASE("reply encoding") {
    CHECK(encode_reply(OkReply{}) == "OK\n");
    CHECK(encode_reply(ErrReply{2}) == "ERR 2\n");
    CHECK(parse_reply("ERR 3\n") == ClutchReply{ErrReply{3}});
    CHECK(parse_reply("OK\n") == ClutchReply{OkReply{}});
    CHECK_THROWS_AS(parse_reply("NOPE\n"), ParseError);
}

TEST_CASE("emulator answers") {
    ClutchEmulator emu;
    CHECK(emu.handle("ENG D 300\n") == "OK\n");
    CHECK(emu.bank().dorsal.engaged);
    CHECK(emu.handle("ENG D 500\n") == "ERR 2\n");
    CHECK(emu.handle("hello\n") == "ERR 1\n");
    CHECK(emu.handle("DIS D\n", 0.5) == "OK\n");
    CHECK_FALSE(emu.bank().dorsal.engaged);
    CHECK(emu.handle("PING\n") == "OK\n");
}

TEST_CASE("link drains its queue through a loopback") {
    auto loop = std::make_shared<LoopbackTransport>();
    ClutchLink link(loop);
    for (int i = 0; i < 50; ++i) {
        link.submit(EngageCmd{ClutchSide::Ventral, 300});
        link.submit(DisengageCmd{ClutchSide::Ventral});
    }
    link.flush();
    CHECK(link.sent() == 100);
    CHECK(link.errors() == 0);
    CHECK(loop->emulator().commands() == 100);
    CHECK_FALSE(loop->emulator().bank().ventral.engaged);
}

TEST_CASE("device ledger alternates polarity and counts springs") {
    DeviceLedger d;
    CHECK_FALSE(d.begin_subject());
    CHECK(d.begin_subject());
    CHECK_FALSE(d.begin_subject());
    CHECK(d.begin_subject());
    CHECK_FALSE(d.springs_due());
    d.begin_subject();
    CHECK(d.springs_due());
    d.replace_springs();
    CHECK_FALSE(d.springs_due());

    const auto file = std::filesystem::temp_directory_path() / "haptrain_device_test.json";
    d.save(file);
    const auto back = DeviceLedger::load(file);
    CHECK(back.polarity_reversed == d.polarity_reversed);
    CHECK(back.total_subjects == 5);
    std::filesystem::remove(file);
}

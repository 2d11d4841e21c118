#include "mugl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "mugl/errors.hpp"
#include "mugl/rng.hpp"

using nlohmann::json;

namespace mugl {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'G', 'L', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

json skeleton_to_json(const Skeleton& s) {
    json j;
    j["parents"] = s.tree.parent;
    json rest = json::array();
    for (const auto& p : s.rest.positions) rest.push_back({p.x(), p.y(), p.z()});
    j["rest"] = rest;
    return j;
}

Skeleton skeleton_from_json(const json& j) {
    Skeleton s;
    std::vector<int> parents = j.at("parents").get<std::vector<int>>();
    s.tree = KinematicTree(static_cast<int>(parents.size()), parents);
    for (const auto& p : j.at("rest"))
        s.rest.positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                      p.at(2).get<double>());
    if (s.rest.joint_count() != s.tree.joint_count)
        throw CorruptArchive("skeleton rest/parents lengths disagree");
    return s;
}

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["num_classes"] = m.num_classes;
    j["num_viewpoints"] = m.num_viewpoints;
    j["timesteps"] = m.timesteps;
    j["persons"] = m.persons;
    j["frame_rate"] = m.frame_rate;
    j["skeleton"] = skeleton_to_json(m.skeleton);
    json classes = json::array();
    for (const auto& c : m.classes) {
        classes.push_back({{"name", c.name},
                           {"person_count", c.person_count},
                           {"leg_movement", c.leg_movement},
                           {"setups", c.setups}});
    }
    j["classes"] = classes;
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.num_classes = j.at("num_classes").get<int>();
    m.num_viewpoints = j.at("num_viewpoints").get<int>();
    m.timesteps = j.at("timesteps").get<int>();
    m.persons = j.at("persons").get<int>();
    m.frame_rate = j.at("frame_rate").get<double>();
    m.skeleton = skeleton_from_json(j.at("skeleton"));
    for (const auto& c : j.at("classes")) {
        ClassMeta meta;
        meta.name = c.at("name").get<std::string>();
        meta.person_count = c.at("person_count").get<int>();
        meta.leg_movement = c.at("leg_movement").get<bool>();
        meta.setups = c.at("setups").get<std::vector<int>>();
        m.classes.push_back(std::move(meta));
    }
    if (static_cast<int>(m.classes.size()) != m.num_classes)
        throw CorruptArchive("class metadata count differs from num_classes");
    if (m.timesteps < 1 || m.persons < 1 || m.num_viewpoints < 1)
        throw CorruptArchive("manifest dimensions must be positive");
    return m;
}

void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    const std::size_t at = buf.size();
    buf.resize(at + 4);
    std::memcpy(buf.data() + at, &v, 4);
}

void append_f32(std::vector<std::uint8_t>& buf, const double* values, std::size_t count) {
    const std::size_t at = buf.size();
    buf.resize(at + 4 * count);
    for (std::size_t i = 0; i < count; ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(buf.data() + at + 4 * i, &f, 4);
    }
}

void validate_sample(const SampleRecord& rec, const DatasetManifest& m) {
    const ActionSequence& s = rec.seq;
    if (s.class_label < 0 || s.class_label >= m.num_classes)
        throw InvariantViolation("sample class out of range");
    if (s.viewpoint < 0 || s.viewpoint >= m.num_viewpoints)
        throw InvariantViolation("sample viewpoint out of range");
    if (s.length < 1 || s.length > m.timesteps)
        throw InvariantViolation("sample length out of range");
    if (s.local.T != m.timesteps || s.local.P != m.persons || s.local.J != m.joint_count())
        throw InvariantViolation("sample local dims disagree with manifest");
    if (s.global.T != m.timesteps || s.global.P != m.persons)
        throw InvariantViolation("sample global dims disagree with manifest");
}

} // namespace

void save_archive(const Dataset& ds, const std::string& path) {
    for (const auto& rec : ds.samples) validate_sample(rec, ds.manifest);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open archive for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    std::uint32_t version = kVersion;
    os.write(reinterpret_cast<const char*>(&version), 4);

    const std::string manifest = manifest_to_json(ds.manifest).dump();
    const std::uint64_t mlen = manifest.size();
    os.write(reinterpret_cast<const char*>(&mlen), 8);
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

    const int T = ds.manifest.timesteps;
    const int P = ds.manifest.persons;
    for (const auto& rec : ds.samples) {
        std::vector<std::uint8_t> buf;
        append_u32(buf, static_cast<std::uint32_t>(rec.seq.class_label));
        append_u32(buf, static_cast<std::uint32_t>(rec.seq.viewpoint));
        append_u32(buf, static_cast<std::uint32_t>(rec.setup));
        append_u32(buf, static_cast<std::uint32_t>(rec.seq.length));
        append_f32(buf, rec.seq.local.rot6d.data(), rec.seq.local.rot6d.size());
        for (int t = 0; t < T; ++t)
            append_f32(buf, rec.seq.global.g1[static_cast<std::size_t>(t)].data(), 3);
        for (int p = 1; p < P; ++p)
            for (int t = 0; t < T; ++t)
                append_f32(buf, rec.seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)].data(), 3);
        const std::uint32_t crc =
            static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
        append_u32(buf, crc);
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw IoFailure("archive write failed: " + path);
}

Dataset load_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open archive: " + path);

    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw CorruptArchive("bad archive magic in " + path);
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (is.gcount() != 4 || version != kVersion) throw CorruptArchive("unsupported archive version");
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), 8);
    if (is.gcount() != 8) throw CorruptArchive("truncated manifest length");
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (is.gcount() != static_cast<std::streamsize>(mlen)) throw CorruptArchive("truncated manifest");

    Dataset ds;
    try {
        ds.manifest = manifest_from_json(json::parse(mtext));
    } catch (const json::exception& e) {
        throw CorruptArchive(std::string("manifest parse: ") + e.what());
    }

    const int T = ds.manifest.timesteps;
    const int P = ds.manifest.persons;
    const int J = ds.manifest.joint_count();
    const std::size_t payload =
        16 + 4 * (static_cast<std::size_t>(T) * P * J * 6 + static_cast<std::size_t>(T) * 3 +
                  static_cast<std::size_t>(P - 1) * T * 3);

    std::vector<std::uint8_t> buf(payload);
    while (true) {
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload));
        if (is.gcount() == 0 && is.eof()) break;
        if (is.gcount() != static_cast<std::streamsize>(payload))
            throw CorruptArchive("truncated sample record");
        std::uint32_t stored_crc = 0;
        is.read(reinterpret_cast<char*>(&stored_crc), 4);
        if (is.gcount() != 4) throw CorruptArchive("truncated record checksum");
        const std::uint32_t crc =
            static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
        if (crc != stored_crc) throw CorruptArchive("record checksum mismatch");

        SampleRecord rec;
        std::uint32_t u[4];
        std::memcpy(u, buf.data(), 16);
        rec.seq.class_label = static_cast<int>(u[0]);
        rec.seq.viewpoint = static_cast<int>(u[1]);
        rec.setup = static_cast<int>(u[2]);
        rec.seq.length = static_cast<int>(u[3]);
        rec.seq.person_count =
            ds.manifest.classes[std::min<std::size_t>(u[0], ds.manifest.classes.size() - 1)]
                .person_count;
        rec.seq.local = LocalComponent(T, P, J);
        rec.seq.global = GlobalComponent(T, P);

        const std::uint8_t* cur = buf.data() + 16;
        auto read_f32 = [&cur](double* dst, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                float f;
                std::memcpy(&f, cur, 4);
                cur += 4;
                dst[i] = static_cast<double>(f);
            }
        };
        read_f32(rec.seq.local.rot6d.data(), rec.seq.local.rot6d.size());
        for (int t = 0; t < T; ++t) read_f32(rec.seq.global.g1[static_cast<std::size_t>(t)].data(), 3);
        for (int p = 1; p < P; ++p)
            for (int t = 0; t < T; ++t)
                read_f32(rec.seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)].data(), 3);

        validate_sample(rec, ds.manifest);
        ds.samples.push_back(std::move(rec));
    }
    return ds;
}

void export_json(const Dataset& ds, const std::string& path) {
    json j;
    j["format"] = "mugl-dataset";
    j["version"] = kVersion;
    j["manifest"] = manifest_to_json(ds.manifest);
    json samples = json::array();
    for (const auto& rec : ds.samples) {
        json s;
        s["class"] = rec.seq.class_label;
        s["viewpoint"] = rec.seq.viewpoint;
        s["setup"] = rec.setup;
        s["length"] = rec.seq.length;
        s["local"] = rec.seq.local.rot6d;
        json g1 = json::array();
        for (const auto& g : rec.seq.global.g1) g1.push_back({g.x(), g.y(), g.z()});
        s["g1"] = g1;
        json disp = json::array();
        for (const auto& person : rec.seq.global.disp) {
            json dp = json::array();
            for (const auto& d : person) dp.push_back({d.x(), d.y(), d.z()});
            disp.push_back(dp);
        }
        s["disp"] = disp;
        samples.push_back(std::move(s));
    }
    j["samples"] = std::move(samples);

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot open json export: " + path);
    os << j.dump(1) << "\n";
    if (!os) throw IoFailure("json export write failed: " + path);
}

Dataset import_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoFailure("cannot open json import: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw CorruptArchive(std::string("json parse: ") + e.what());
    }
    if (j.value("format", "") != "mugl-dataset") throw CorruptArchive("not a mugl-dataset json");

    Dataset ds;
    ds.manifest = manifest_from_json(j.at("manifest"));
    const int T = ds.manifest.timesteps;
    const int P = ds.manifest.persons;
    const int J = ds.manifest.joint_count();
    for (const auto& s : j.at("samples")) {
        SampleRecord rec;
        rec.seq.class_label = s.at("class").get<int>();
        rec.seq.viewpoint = s.at("viewpoint").get<int>();
        rec.setup = s.at("setup").get<int>();
        rec.seq.length = s.at("length").get<int>();
        rec.seq.person_count = ds.manifest.classes[static_cast<std::size_t>(rec.seq.class_label)].person_count;
        rec.seq.local = LocalComponent(T, P, J);
        rec.seq.local.rot6d = s.at("local").get<std::vector<double>>();
        if (rec.seq.local.rot6d.size() != static_cast<std::size_t>(T) * P * J * 6)
            throw CorruptArchive("local payload size mismatch");
        rec.seq.global = GlobalComponent(T, P);
        const auto& g1 = s.at("g1");
        if (static_cast<int>(g1.size()) != T) throw CorruptArchive("g1 length mismatch");
        for (int t = 0; t < T; ++t)
            rec.seq.global.g1[static_cast<std::size_t>(t)] =
                Eigen::Vector3d(g1[t][0].get<double>(), g1[t][1].get<double>(), g1[t][2].get<double>());
        const auto& disp = s.at("disp");
        if (static_cast<int>(disp.size()) != P - 1) throw CorruptArchive("disp person count mismatch");
        for (int p = 1; p < P; ++p) {
            const auto& dp = disp[p - 1];
            if (static_cast<int>(dp.size()) != T) throw CorruptArchive("disp length mismatch");
            for (int t = 0; t < T; ++t)
                rec.seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] =
                    Eigen::Vector3d(dp[t][0].get<double>(), dp[t][1].get<double>(), dp[t][2].get<double>());
        }
        validate_sample(rec, ds.manifest);
        ds.samples.push_back(std::move(rec));
    }
    return ds;
}

// --- synthetic corpus --------------------------------------------------------

namespace {

json class_spec_to_json(const ClassSpec& c) {
    json j;
    j["name"] = c.name;
    j["person_count"] = c.person_count;
    j["leg_movement"] = c.leg_movement;
    j["length_range"] = {c.t_min, c.t_max};
    j["amplitude_jitter"] = c.amplitude_jitter;
    j["phase_jitter"] = c.phase_jitter;
    j["velocity"] = c.velocity;
    j["partner_offset"] = c.partner_offset;
    j["partner_velocity"] = c.partner_velocity;
    json joints = json::array();
    for (const auto& m : c.joints)
        joints.push_back({{"joint", m.joint},
                          {"axis", m.axis},
                          {"amplitude", m.amplitude},
                          {"frequency", m.frequency},
                          {"phase", m.phase}});
    j["joints"] = joints;
    return j;
}

ClassSpec class_spec_from_json(const json& j) {
    ClassSpec c;
    c.name = j.at("name").get<std::string>();
    c.person_count = j.value("person_count", 1);
    c.leg_movement = j.value("leg_movement", false);
    c.t_min = j.at("length_range").at(0).get<int>();
    c.t_max = j.at("length_range").at(1).get<int>();
    c.amplitude_jitter = j.value("amplitude_jitter", 0.2);
    c.phase_jitter = j.value("phase_jitter", 0.3);
    if (j.contains("velocity")) c.velocity = j.at("velocity").get<std::array<double, 3>>();
    if (j.contains("partner_offset"))
        c.partner_offset = j.at("partner_offset").get<std::array<double, 3>>();
    if (j.contains("partner_velocity"))
        c.partner_velocity = j.at("partner_velocity").get<std::array<double, 3>>();
    for (const auto& m : j.value("joints", json::array())) {
        JointMotionSpec spec;
        spec.joint = m.at("joint").get<int>();
        spec.axis = m.at("axis").get<std::array<double, 3>>();
        spec.amplitude = m.at("amplitude").get<double>();
        spec.frequency = m.at("frequency").get<double>();
        spec.phase = m.value("phase", 0.0);
        c.joints.push_back(spec);
    }
    return c;
}

} // namespace

SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoFailure("cannot open synth spec: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw BadSpec(std::string("spec parse: ") + e.what());
    }
    SynthSpec s;
    s.skeleton_preset = j.value("skeleton", "humanoid8");
    s.timesteps = j.value("timesteps", 16);
    s.persons = j.value("persons", 2);
    s.num_viewpoints = j.value("viewpoints", 2);
    s.num_setups = j.value("setups", 2);
    s.samples_per_class = j.value("samples_per_class", 40);
    s.view_yaw_step = j.value("view_yaw_step", 0.35);
    s.frame_rate = j.value("frame_rate", 8.25);
    for (const auto& c : j.at("classes")) s.classes.push_back(class_spec_from_json(c));
    return s;
}

void save_synth_spec(const SynthSpec& s, const std::string& path) {
    json j;
    j["skeleton"] = s.skeleton_preset;
    j["timesteps"] = s.timesteps;
    j["persons"] = s.persons;
    j["viewpoints"] = s.num_viewpoints;
    j["setups"] = s.num_setups;
    j["samples_per_class"] = s.samples_per_class;
    j["view_yaw_step"] = s.view_yaw_step;
    j["frame_rate"] = s.frame_rate;
    json classes = json::array();
    for (const auto& c : s.classes) classes.push_back(class_spec_to_json(c));
    j["classes"] = classes;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot write synth spec: " + path);
    os << j.dump(2) << "\n";
}

SynthSpec desk_default_spec() {
    SynthSpec s;
    s.skeleton_preset = "humanoid8";
    s.timesteps = 16;
    s.persons = 2;
    s.num_viewpoints = 2;
    s.num_setups = 2;
    s.samples_per_class = 40;
    s.view_yaw_step = 0.35;

    // Joint ids on humanoid8: 1 spine, 4/5 hands, 6/7 feet.
    ClassSpec wave;
    wave.name = "wave";
    wave.person_count = 1;
    wave.t_min = 8;
    wave.t_max = 16;
    wave.joints = {{4, {0, 0, 1}, 0.9, 2.0, 0.0}, {5, {0, 0, 1}, 0.7, 2.0, M_PI}};

    ClassSpec squat;
    squat.name = "squat";
    squat.person_count = 1;
    squat.leg_movement = true;
    squat.t_min = 10;
    squat.t_max = 16;
    squat.joints = {{6, {1, 0, 0}, 0.7, 1.0, 0.0},
                    {7, {1, 0, 0}, 0.7, 1.0, 0.0},
                    {1, {1, 0, 0}, 0.35, 1.0, M_PI}};

    ClassSpec walk;
    walk.name = "walk";
    walk.person_count = 1;
    walk.leg_movement = true;
    walk.t_min = 12;
    walk.t_max = 16;
    walk.velocity = {0.09, 0.0, 0.0};
    walk.joints = {{6, {0, 0, 1}, 0.6, 2.0, 0.0},
                   {7, {0, 0, 1}, 0.6, 2.0, M_PI},
                   {4, {0, 0, 1}, 0.3, 2.0, M_PI},
                   {5, {0, 0, 1}, 0.3, 2.0, 0.0}};

    ClassSpec approach;
    approach.name = "approach";
    approach.person_count = 2;
    approach.t_min = 6;
    approach.t_max = 12;
    approach.partner_offset = {0.0, 0.0, 1.6};
    approach.partner_velocity = {0.0, 0.0, -0.08};
    approach.joints = {{4, {1, 0, 0}, 0.5, 1.0, 0.0}, {5, {1, 0, 0}, 0.5, 1.0, M_PI}};

    s.classes = {wave, squat, walk, approach};
    return s;
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.classes.empty()) throw BadSpec("no classes in spec");
    if (spec.timesteps < 1 || spec.persons < 1 || spec.num_setups < 1 || spec.num_viewpoints < 1)
        throw BadSpec("dimensions must be positive");

    const Skeleton skeleton = builtin_skeleton(spec.skeleton_preset);
    const int T = spec.timesteps;
    const int P = spec.persons;
    const int J = skeleton.tree.joint_count;

    Dataset ds;
    ds.manifest.num_classes = static_cast<int>(spec.classes.size());
    ds.manifest.num_viewpoints = spec.num_viewpoints;
    ds.manifest.timesteps = T;
    ds.manifest.persons = P;
    ds.manifest.frame_rate = spec.frame_rate;
    ds.manifest.skeleton = skeleton;

    for (const auto& c : spec.classes) {
        if (c.t_min < 1 || c.t_max > T || c.t_min > c.t_max)
            throw BadSpec("class '" + c.name + "' length range outside [1, T]");
        if (c.person_count < 1 || c.person_count > P)
            throw BadSpec("class '" + c.name + "' person count outside [1, P]");
        for (const auto& m : c.joints)
            if (m.joint < 0 || m.joint >= J) throw BadSpec("joint id out of range in '" + c.name + "'");
        ClassMeta meta;
        meta.name = c.name;
        meta.person_count = c.person_count;
        meta.leg_movement = c.leg_movement;
        for (int su = 0; su < spec.num_setups; ++su) meta.setups.push_back(su);
        ds.manifest.classes.push_back(std::move(meta));
    }

    for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const ClassSpec& cls = spec.classes[ci];
        for (int si = 0; si < spec.samples_per_class; ++si) {
            Rng rng(mix_seed(seed, ci, static_cast<std::uint64_t>(si)));

            SampleRecord rec;
            rec.seq.class_label = static_cast<int>(ci);
            rec.seq.viewpoint = static_cast<int>(rng.uniform_int(0, spec.num_viewpoints - 1));
            rec.setup = static_cast<int>(rng.uniform_int(0, spec.num_setups - 1));
            rec.seq.length = static_cast<int>(rng.uniform_int(cls.t_min, cls.t_max));
            rec.seq.person_count = cls.person_count;
            rec.seq.local = LocalComponent(T, P, J);
            rec.seq.global = GlobalComponent(T, P);

            const RotationMatrix view =
                axis_angle({0, 1, 0}, rec.seq.viewpoint * spec.view_yaw_step);

            // Independent jitter per active person.
            struct Jitter {
                std::vector<double> amp, phase;
            };
            std::vector<Jitter> jitter(static_cast<std::size_t>(cls.person_count));
            for (auto& jt : jitter) {
                for (std::size_t k = 0; k < cls.joints.size(); ++k) {
                    jt.amp.push_back(1.0 + rng.uniform(-cls.amplitude_jitter, cls.amplitude_jitter));
                    jt.phase.push_back(rng.uniform(-cls.phase_jitter, cls.phase_jitter));
                }
            }

            const int t_s = rec.seq.length;
            for (int t = 0; t < T; ++t) {
                const int te = std::min(t, t_s - 1); // padding holds the last frame
                for (int p = 0; p < P; ++p) {
                    const int src_person = std::min(p, cls.person_count - 1);
                    RotationMatrix base = view;
                    if (cls.person_count > 1 && src_person > 0)
                        base = base * axis_angle({0, 1, 0}, M_PI); // partners face each other
                    for (int j = 0; j < J; ++j) {
                        RotationMatrix r = base;
                        for (std::size_t k = 0; k < cls.joints.size(); ++k) {
                            const auto& m = cls.joints[k];
                            if (m.joint != j) continue;
                            const auto& jt = jitter[static_cast<std::size_t>(src_person)];
                            const double angle =
                                m.amplitude * jt.amp[k] *
                                std::sin(2.0 * M_PI * m.frequency * te / T + m.phase + jt.phase[k]);
                            r = r * axis_angle({m.axis[0], m.axis[1], m.axis[2]}, angle);
                        }
                        rec.seq.local.set(t, p, j, matrix_to_rot6d(r));
                    }
                }
                const Eigen::Vector3d vel(cls.velocity[0], cls.velocity[1], cls.velocity[2]);
                rec.seq.global.g1[static_cast<std::size_t>(t)] = view * (vel * te);
                for (int p = 1; p < P; ++p) {
                    Eigen::Vector3d d = Eigen::Vector3d::Zero();
                    if (p < cls.person_count) {
                        const Eigen::Vector3d off(cls.partner_offset[0], cls.partner_offset[1],
                                                  cls.partner_offset[2]);
                        const Eigen::Vector3d pv(cls.partner_velocity[0], cls.partner_velocity[1],
                                                 cls.partner_velocity[2]);
                        d = view * (off + pv * te);
                    }
                    rec.seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] = d;
                }
            }
            ds.samples.push_back(std::move(rec));
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_cross_setup(const Dataset& ds,
                                              const std::vector<int>& train_setups) {
    std::set<int> present;
    for (const auto& rec : ds.samples) present.insert(rec.setup);
    std::set<int> train_set;
    for (int s : train_setups) {
        if (!present.count(s)) throw UnknownSetup("setup " + std::to_string(s) + " has no samples");
        train_set.insert(s);
    }

    Dataset train, eval;
    train.manifest = ds.manifest;
    eval.manifest = ds.manifest;
    for (const auto& rec : ds.samples) {
        if (train_set.count(rec.setup))
            train.samples.push_back(rec);
        else
            eval.samples.push_back(rec);
    }
    return {std::move(train), std::move(eval)};
}

} // namespace mugl

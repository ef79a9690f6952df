#include "tsadw/dataset_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tsadw/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary dataset codec assumes a little-endian host");

namespace tsadw {

using nlohmann::json;

namespace {

constexpr int kTextVersion = 1;
constexpr std::uint32_t kBinaryVersion = 1;
constexpr char kMagic[6] = {'T', 'S', 'A', 'D', 'W', '1'};

json stats_to_json(const NormalizationStats& s) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return json{{"mag_mean", vec(s.mag_mean)},
                {"mag_std", vec(s.mag_std)},
                {"ang_mean", vec(s.ang_mean)},
                {"ang_std", vec(s.ang_std)}};
}

NormalizationStats stats_from_json(const json& j) {
    auto vec = [](const json& a) {
        Eigen::VectorXd v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
        return v;
    };
    NormalizationStats s;
    s.mag_mean = vec(j.at("mag_mean"));
    s.mag_std = vec(j.at("mag_std"));
    s.ang_mean = vec(j.at("ang_mean"));
    s.ang_std = vec(j.at("ang_std"));
    return s;
}

}  // namespace

void save_dataset_text(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");

    json header{{"format", "TSADW"}, {"version", kTextVersion}, {"frame_hz", ds.frame_hz}};
    header["stats"] = ds.stats ? stats_to_json(*ds.stats) : json(nullptr);
    out << header.dump() << "\n";

    for (const auto& c : ds.cases) {
        if (!c.matrix.fully_known())
            throw ParseError("case " + c.id + " has unknown entries; the text format stores no mask");
        const int b = c.matrix.bus_count();
        const int t = c.matrix.cycle_count();
        std::vector<double> mag, ang;
        mag.reserve(static_cast<std::size_t>(b) * t);
        ang.reserve(static_cast<std::size_t>(b) * t);
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < t; ++j) {
                mag.push_back(c.matrix.mag()(i, j));
                ang.push_back(c.matrix.ang()(i, j));
            }
        }
        json line{{"id", c.id},
                  {"label", c.label},
                  {"B", b},
                  {"T", t},
                  {"frames", json::array({mag, ang})},
                  {"meta",
                   {{"load_pct", c.meta.load_pct},
                    {"fault_bus", c.meta.fault_bus},
                    {"removed", c.meta.removed}}}};
        out << line.dump() << "\n";
    }
    if (!out) throw ParseError("write failed for " + path);
}

Dataset load_dataset_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    Dataset ds;
    std::string line;
    long long line_no = 0;

    if (!std::getline(in, line)) throw ParseError(path + ": missing header line", 1);
    ++line_no;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(path + ":1: bad header: " + e.what(), 1);
    }
    if (header.value("format", "") != "TSADW")
        throw ParseError(path + ":1: not a TSADW dataset header", 1);
    if (header.value("version", -1) != kTextVersion)
        throw VersionError(path + ": text format version " + header.at("version").dump() +
                           " unsupported (expected " + std::to_string(kTextVersion) + ")");
    ds.frame_hz = header.at("frame_hz").get<double>();
    if (!header.at("stats").is_null()) ds.stats = stats_from_json(header.at("stats"));

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
        }
        try {
            const int b = j.at("B").get<int>();
            const int t = j.at("T").get<int>();
            const auto& frames = j.at("frames");
            if (frames.size() != 2 || frames[0].size() != static_cast<std::size_t>(b) * t ||
                frames[1].size() != static_cast<std::size_t>(b) * t)
                throw ParseError(path + ":" + std::to_string(line_no) + ": frames do not match B*T",
                                 line_no);
            Eigen::MatrixXd mag(b, t), ang(b, t);
            for (int i = 0; i < b; ++i) {
                for (int k = 0; k < t; ++k) {
                    mag(i, k) = frames[0][static_cast<std::size_t>(i) * t + k].get<double>();
                    ang(i, k) = frames[1][static_cast<std::size_t>(i) * t + k].get<double>();
                }
            }
            ContingencyCase c;
            c.id = j.at("id").get<std::string>();
            c.label = j.at("label").get<int>();
            if (c.label != 0 && c.label != 1)
                throw ParseError(path + ":" + std::to_string(line_no) + ": label must be 0 or 1", line_no);
            c.matrix = MeasurementMatrix::full(mag, ang);
            if (j.contains("meta")) {
                const auto& m = j["meta"];
                c.meta.load_pct = m.value("load_pct", 100.0);
                c.meta.fault_bus = m.value("fault_bus", -1);
                c.meta.removed = m.value("removed", std::vector<std::string>{});
            }
            ds.cases.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return ds;
}

namespace {

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw ParseError("cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    template <typename T>
    void pod(T v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void finish() {
        out_.flush();
        if (!out_) throw ParseError("write failed for " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw ParseError("cannot open " + path);
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw ParseError(path_ + ": truncated at byte offset " + std::to_string(offset()), offset());
        pos_ += n;
    }
    template <typename T>
    T pod() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str(std::size_t max_len = 1u << 20) {
        const auto n = pod<std::uint32_t>();
        if (n > max_len) throw ParseError(path_ + ": implausible string length at offset " + std::to_string(offset()), offset());
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    long long offset() const { return pos_; }

private:
    std::ifstream in_;
    std::string path_;
    long long pos_ = 0;
};

void write_vec(Writer& w, const Eigen::VectorXd& v) {
    w.pod(static_cast<std::uint32_t>(v.size()));
    w.bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Eigen::VectorXd read_vec(Reader& r) {
    const auto n = r.pod<std::uint32_t>();
    Eigen::VectorXd v(n);
    if (n) r.bytes(v.data(), sizeof(double) * n);
    return v;
}

}  // namespace

void save_dataset_binary(const Dataset& ds, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, sizeof kMagic);
    w.pod(kBinaryVersion);
    w.pod(ds.frame_hz);
    w.pod(static_cast<std::uint8_t>(ds.stats ? 1 : 0));
    if (ds.stats) {
        write_vec(w, ds.stats->mag_mean);
        write_vec(w, ds.stats->mag_std);
        write_vec(w, ds.stats->ang_mean);
        write_vec(w, ds.stats->ang_std);
    }
    w.pod(static_cast<std::uint64_t>(ds.cases.size()));
    for (const auto& c : ds.cases) {
        w.str(c.id);
        w.pod(static_cast<std::uint8_t>(c.label));
        w.pod(c.meta.load_pct);
        w.pod(static_cast<std::int32_t>(c.meta.fault_bus));
        w.pod(static_cast<std::uint32_t>(c.meta.removed.size()));
        for (const auto& r : c.meta.removed) w.str(r);

        const int b = c.matrix.bus_count();
        const int t = c.matrix.cycle_count();
        w.pod(static_cast<std::uint32_t>(b));
        w.pod(static_cast<std::uint32_t>(t));
        for (int i = 0; i < b; ++i) w.bytes(c.matrix.mag().row(i).eval().data(), sizeof(double) * t);
        for (int i = 0; i < b; ++i) w.bytes(c.matrix.ang().row(i).eval().data(), sizeof(double) * t);

        // Mask packed bus-major, LSB first.
        std::vector<std::uint8_t> bits((static_cast<std::size_t>(b) * t + 7) / 8, 0);
        std::size_t idx = 0;
        for (int i = 0; i < b; ++i)
            for (int j = 1; j <= t; ++j, ++idx)
                if (c.matrix.known(i, j)) bits[idx / 8] |= static_cast<std::uint8_t>(1u << (idx % 8));
        w.bytes(bits.data(), bits.size());
    }
    w.finish();
}

Dataset load_dataset_binary(const std::string& path) {
    Reader r(path);
    char magic[6];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ParseError(path + ": bad magic, not a TSADW1 dataset", 0);
    const auto version = r.pod<std::uint32_t>();
    if (version != kBinaryVersion)
        throw VersionError(path + ": binary format version " + std::to_string(version) +
                           " unsupported (expected " + std::to_string(kBinaryVersion) + ")");

    Dataset ds;
    ds.frame_hz = r.pod<double>();
    if (r.pod<std::uint8_t>()) {
        NormalizationStats s;
        s.mag_mean = read_vec(r);
        s.mag_std = read_vec(r);
        s.ang_mean = read_vec(r);
        s.ang_std = read_vec(r);
        ds.stats = std::move(s);
    }
    const auto n_cases = r.pod<std::uint64_t>();
    ds.cases.reserve(n_cases);
    for (std::uint64_t k = 0; k < n_cases; ++k) {
        ContingencyCase c;
        c.id = r.str();
        c.label = r.pod<std::uint8_t>();
        c.meta.load_pct = r.pod<double>();
        c.meta.fault_bus = r.pod<std::int32_t>();
        const auto n_removed = r.pod<std::uint32_t>();
        for (std::uint32_t i = 0; i < n_removed; ++i) c.meta.removed.push_back(r.str());

        const auto b = r.pod<std::uint32_t>();
        const auto t = r.pod<std::uint32_t>();
        if (b > 100000 || t > 10000000)
            throw ParseError(path + ": implausible dimensions at offset " + std::to_string(r.offset()),
                             r.offset());
        Eigen::MatrixXd mag(b, t), ang(b, t);
        for (std::uint32_t i = 0; i < b; ++i) {
            Eigen::VectorXd row(t);
            r.bytes(row.data(), sizeof(double) * t);
            mag.row(i) = row;
        }
        for (std::uint32_t i = 0; i < b; ++i) {
            Eigen::VectorXd row(t);
            r.bytes(row.data(), sizeof(double) * t);
            ang.row(i) = row;
        }
        std::vector<std::uint8_t> bits((static_cast<std::size_t>(b) * t + 7) / 8);
        r.bytes(bits.data(), bits.size());

        bool all_known = true;
        for (std::size_t idx = 0; idx < static_cast<std::size_t>(b) * t; ++idx)
            if (!(bits[idx / 8] & (1u << (idx % 8)))) { all_known = false; break; }

        if (all_known) {
            c.matrix = MeasurementMatrix::full(mag, ang);
        } else {
            c.matrix = MeasurementMatrix(static_cast<int>(b), static_cast<int>(t));
            std::size_t idx = 0;
            for (std::uint32_t i = 0; i < b; ++i)
                for (std::uint32_t j = 1; j <= t; ++j, ++idx)
                    if (bits[idx / 8] & (1u << (idx % 8)))
                        c.matrix.set(static_cast<int>(i), static_cast<int>(j), mag(i, j - 1), ang(i, j - 1));
        }
        ds.cases.push_back(std::move(c));
    }
    return ds;
}

}  // namespace tsadw

#include "pcq/ply_io.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

#include "pcq/error.hpp"

namespace pcq {

namespace {

enum class PropType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::size_t prop_size(PropType t) {
    switch (t) {
        case PropType::I8:
        case PropType::U8: return 1;
        case PropType::I16:
        case PropType::U16: return 2;
        case PropType::I32:
        case PropType::U32:
        case PropType::F32: return 4;
        case PropType::F64: return 8;
    }
    return 0;
}

PropType parse_prop_type(const std::string& word) {
    if (word == "char" || word == "int8") return PropType::I8;
    if (word == "uchar" || word == "uint8") return PropType::U8;
    if (word == "short" || word == "int16") return PropType::I16;
    if (word == "ushort" || word == "uint16") return PropType::U16;
    if (word == "int" || word == "int32") return PropType::I32;
    if (word == "uint" || word == "uint32") return PropType::U32;
    if (word == "float" || word == "float32") return PropType::F32;
    if (word == "double" || word == "float64") return PropType::F64;
    throw Error(ErrorCode::ParseError, "unknown PLY property type: " + word);
}

struct Property {
    std::string name;
    PropType type = PropType::F32;
    bool is_list = false;
    PropType count_type = PropType::U8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

struct Header {
    bool binary = false;
    std::vector<Element> elements;
};

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::ParseError, msg); }

Header parse_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) fail("empty PLY stream");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") fail("missing 'ply' magic line");

    Header header;
    bool saw_format = false;
    bool done = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word.empty() || word == "comment" || word == "obj_info") continue;
        if (word == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii") {
                header.binary = false;
            } else if (fmt == "binary_little_endian") {
                header.binary = true;
            } else if (fmt == "binary_big_endian") {
                throw Error(ErrorCode::UnsupportedFormat, "big-endian PLY is not supported");
            } else {
                fail("unknown PLY format: " + fmt);
            }
            if (version != "1.0") fail("unsupported PLY version: " + version);
            saw_format = true;
        } else if (word == "element") {
            Element elem;
            long long n = -1;
            ls >> elem.name >> n;
            if (elem.name.empty() || n < 0) fail("malformed element line: " + line);
            elem.count = static_cast<std::size_t>(n);
            header.elements.push_back(std::move(elem));
        } else if (word == "property") {
            if (header.elements.empty()) fail("property before any element");
            Property prop;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, vt;
                ls >> ct >> vt >> prop.name;
                prop.is_list = true;
                prop.count_type = parse_prop_type(ct);
                prop.type = parse_prop_type(vt);
            } else {
                prop.type = parse_prop_type(t);
                ls >> prop.name;
            }
            if (prop.name.empty()) fail("malformed property line: " + line);
            header.elements.back().properties.push_back(std::move(prop));
        } else if (word == "end_header") {
            done = true;
            break;
        } else {
            fail("unexpected header line: " + line);
        }
    }
    if (!done) fail("header missing end_header");
    if (!saw_format) fail("header missing format line");
    return header;
}

double read_binary_value(std::istream& in, PropType type) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(prop_size(type)))) {
        fail("unexpected end of binary PLY body");
    }
    switch (type) {
        case PropType::I8: return static_cast<double>(static_cast<signed char>(buf[0]));
        case PropType::U8: return static_cast<double>(buf[0]);
        case PropType::I16: {
            std::int16_t v;
            std::memcpy(&v, buf, 2);
            return v;
        }
        case PropType::U16: {
            std::uint16_t v;
            std::memcpy(&v, buf, 2);
            return v;
        }
        case PropType::I32: {
            std::int32_t v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PropType::U32: {
            std::uint32_t v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PropType::F32: {
            float v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PropType::F64: {
            double v;
            std::memcpy(&v, buf, 8);
            return v;
        }
    }
    return 0.0;
}

double read_ascii_value(std::istream& in) {
    double v;
    if (!(in >> v)) fail("unexpected end of ASCII PLY body");
    return v;
}

}  // namespace

RawPointCloud parse_ply(std::istream& in) {
    const Header header = parse_header(in);

    const Element* vertex = nullptr;
    for (const Element& e : header.elements) {
        if (e.name == "vertex") vertex = &e;
    }
    if (!vertex) fail("PLY has no vertex element");
    if (vertex->count < 1) fail("PLY vertex element is empty");

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
        const Property& p = vertex->properties[i];
        if (p.is_list) continue;
        if (p.name == "x") ix = static_cast<int>(i);
        if (p.name == "y") iy = static_cast<int>(i);
        if (p.name == "z") iz = static_cast<int>(i);
        if (p.name == "red") ir = static_cast<int>(i);
        if (p.name == "green") ig = static_cast<int>(i);
        if (p.name == "blue") ib = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) fail("PLY vertex element lacks x/y/z properties");
    const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

    RawPointCloud cloud;
    cloud.has_color = has_color;
    cloud.positions.reserve(vertex->count);
    cloud.colors.reserve(vertex->count);

    std::vector<double> row;
    for (const Element& elem : header.elements) {
        const bool want = &elem == vertex;
        for (std::size_t n = 0; n < elem.count; ++n) {
            row.clear();
            for (const Property& prop : elem.properties) {
                if (prop.is_list) {
                    const double cnt = header.binary ? read_binary_value(in, prop.count_type)
                                                     : read_ascii_value(in);
                    if (cnt < 0 || cnt > 1e9) fail("implausible PLY list length");
                    for (long long k = 0; k < static_cast<long long>(cnt); ++k) {
                        if (header.binary) {
                            read_binary_value(in, prop.type);
                        } else {
                            read_ascii_value(in);
                        }
                    }
                    row.push_back(0.0);
                } else {
                    row.push_back(header.binary ? read_binary_value(in, prop.type)
                                                : read_ascii_value(in));
                }
            }
            if (want) {
                cloud.positions.push_back({row[ix], row[iy], row[iz]});
                if (has_color) {
                    auto channel = [&](int idx) {
                        const double v = row[idx];
                        if (v < 0.0 || v > 255.0) fail("PLY color channel out of [0,255]");
                        return static_cast<std::uint8_t>(v);
                    };
                    cloud.colors.push_back({channel(ir), channel(ig), channel(ib)});
                } else {
                    cloud.colors.push_back({128, 128, 128});
                }
            }
        }
        if (want) break;
    }
    return cloud;
}

RawPointCloud parse_ply(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return parse_ply(in);
}

RawPointCloud load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return parse_ply(in);
}

void write_ply(const RawPointCloud& cloud, std::ostream& out, bool ascii) {
    out << "ply\n";
    out << "format " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
    out << "element vertex " << cloud.count() << "\n";
    out << "property double x\n";
    out << "property double y\n";
    out << "property double z\n";
    if (cloud.has_color) {
        out << "property uchar red\n";
        out << "property uchar green\n";
        out << "property uchar blue\n";
    }
    out << "end_header\n";

    if (ascii) {
        out << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (std::size_t i = 0; i < cloud.count(); ++i) {
            const Vec3& p = cloud.positions[i];
            out << p.x << " " << p.y << " " << p.z;
            if (cloud.has_color) {
                const Color& c = cloud.colors[i];
                out << " " << int(c.r) << " " << int(c.g) << " " << int(c.b);
            }
            out << "\n";
        }
    } else {
        for (std::size_t i = 0; i < cloud.count(); ++i) {
            const Vec3& p = cloud.positions[i];
            out.write(reinterpret_cast<const char*>(&p.x), 8);
            out.write(reinterpret_cast<const char*>(&p.y), 8);
            out.write(reinterpret_cast<const char*>(&p.z), 8);
            if (cloud.has_color) {
                const Color& c = cloud.colors[i];
                out.write(reinterpret_cast<const char*>(&c), 3);
            }
        }
    }
}

std::string write_ply(const RawPointCloud& cloud, bool ascii) {
    std::ostringstream out(std::ios::binary);
    write_ply(cloud, out, ascii);
    return out.str();
}

void save_ply(const RawPointCloud& cloud, const std::string& path, bool ascii) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    write_ply(cloud, out, ascii);
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

}  // namespace pcq

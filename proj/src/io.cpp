#include "snell/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "snell/errors.hpp"

namespace snell::io {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void JsonWriter::comma() {
    if (!first_stack_.empty()) {
        if (!first_stack_.back()) out_ += ",";
        first_stack_.back() = false;
    }
}

void JsonWriter::write_key(const std::string& key) {
    comma();
    out_ += "\"" + escape(key) + "\":";
}

std::string JsonWriter::escape(const std::string& s) {
    std::string r;
    for (char c : s) {
        switch (c) {
            case '"': r += "\\\""; break;
            case '\\': r += "\\\\"; break;
            case '\n': r += "\\n"; break;
            case '\t': r += "\\t"; break;
            default: r += c;
        }
    }
    return r;
}

JsonWriter& JsonWriter::begin_object() {
    comma();
    out_ += "{";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::key_object(const std::string& key) {
    write_key(key);
    out_ += "{";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_object() {
    out_ += "}";
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::begin_array(const std::string& key) {
    write_key(key);
    out_ += "[";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::begin_array() {
    comma();
    out_ += "[";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_array() {
    out_ += "]";
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, double v) {
    write_key(key);
    out_ += fmt17(v);
    return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, long long v) {
    write_key(key);
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, unsigned long long v) {
    write_key(key);
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, bool v) {
    write_key(key);
    out_ += v ? "true" : "false";
    return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, const std::string& v) {
    write_key(key);
    out_ += "\"" + escape(v) + "\"";
    return *this;
}

JsonWriter& JsonWriter::element(double v) {
    comma();
    out_ += fmt17(v);
    return *this;
}

JsonWriter& JsonWriter::element(long long v) {
    comma();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::element(const std::string& v) {
    comma();
    out_ += "\"" + escape(v) + "\"";
    return *this;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path);
    os << content;
    if (!os) throw Error("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace snell::io

#ifndef SNELL_IO_HPP
#define SNELL_IO_HPP

#include <string>
#include <vector>

namespace snell::io {

/// 17-significant-digit decimal form; round-trips any finite double.
std::string fmt17(double v);

/// Minimal JSON writer for the report objects this project emits.
/// Keys keep insertion order so re-runs are byte-identical.
class JsonWriter {
public:
    JsonWriter& begin_object();
    JsonWriter& end_object();
    JsonWriter& begin_array(const std::string& key);
    JsonWriter& begin_array();
    JsonWriter& end_array();
    JsonWriter& field(const std::string& key, double v);
    JsonWriter& field(const std::string& key, long long v);
    JsonWriter& field(const std::string& key, int v) { return field(key, static_cast<long long>(v)); }
    JsonWriter& field(const std::string& key, unsigned long long v);
    JsonWriter& field(const std::string& key, bool v);
    JsonWriter& field(const std::string& key, const std::string& v);
    JsonWriter& field(const std::string& key, const char* v) { return field(key, std::string(v)); }
    JsonWriter& element(double v);
    JsonWriter& element(long long v);
    JsonWriter& element(const std::string& v);
    JsonWriter& key_object(const std::string& key);

    std::string str() const { return out_; }

private:
    void comma();
    void write_key(const std::string& key);
    static std::string escape(const std::string& s);

    std::string out_;
    std::vector<bool> first_stack_;
};

/// Writes text to path, replacing any existing file. Throws snell::Error on failure.
void write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace snell::io

#endif  // SNELL_IO_HPP

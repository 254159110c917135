#ifndef FSWAP_CONFIG_HPP
#define FSWAP_CONFIG_HPP

#include <string>
#include <vector>

#include "fswap/common.hpp"
#include "fswap/training.hpp"

namespace fswap {

// Flat key = value configuration with a closed schema: every key has a
// documented default, unknown keys are rejected, and the echo form is
// canonical (stable ordering and number formatting) so config hashes are
// reproducible.
class KeyValueConfig {
public:
    struct Entry {
        const char* key;
        const char* default_value;
        const char* doc;
    };

    static const std::vector<Entry>& schema();
    static KeyValueConfig defaults();
    static KeyValueConfig parse(const std::string& text);  // applied over defaults
    static KeyValueConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    std::string echo() const;
    std::uint64_t hash() const { return fnv1a64(echo()); }

private:
    std::vector<std::pair<std::string, std::string>> values_;  // schema order
};

TrainConfig train_config_from(const KeyValueConfig& kv);
KeyValueConfig config_from_train(const TrainConfig& cfg);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace fswap

#endif

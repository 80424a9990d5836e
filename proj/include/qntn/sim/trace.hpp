#pragma once

// JSON-lines trace: a header line followed by one record per line. Record
// times never decrease. Records at equal times keep the event loop's order.

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <queue>
#include <string>
#include <vector>

namespace qntn::sim {

inline constexpr int kTraceFormatVersion = 1;

// Declaration order is the tiebreak order for simultaneous events.
enum class Category { Channel, Energy, Key, Flow, Handover, Fallback, Control, Violation };
inline constexpr int kCategoryCount = 8;

const char* to_string(Category c);
Category category_from_string(const std::string& s);

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TraceWriter {
public:
    explicit TraceWriter(nlohmann::json header);

    // Appends {"t", "cat", "type", ...fields}. Throws std::logic_error when
    // t precedes the previous record.
    void add(double t, Category cat, const std::string& type, nlohmann::json fields = {});

    const std::string& text() const { return text_; }
    size_t records() const { return count_; }
    double last_t() const { return last_t_; }

private:
    std::string text_;
    size_t count_ = 0;
    double last_t_ = 0.0;
};

struct TraceFile {
    nlohmann::json header;
    std::vector<nlohmann::json> records;
};

// Validates the header's format_version, record fields and time order.
TraceFile parse_trace(std::istream& in);
TraceFile parse_trace_text(const std::string& text);
TraceFile read_trace_file(const std::string& path);

// FNV-1a 64 of the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

// Discrete-event queue. Pops by time, then category order, then insertion
// order.
class EventQueue {
public:
    using Action = std::function<void(double)>;

    void push(double t, Category cat, Action a);
    bool empty() const { return heap_.empty(); }
    size_t size() const { return heap_.size(); }
    double next_time() const;
    // Runs every event with time <= t_end, including ones they schedule.
    // Returns the number executed.
    size_t run_until(double t_end);

private:
    struct Item {
        double t;
        int cat;
        uint64_t seq;
        Action action;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            if (a.t != b.t) {
                return a.t > b.t;
            }
            if (a.cat != b.cat) {
                return a.cat > b.cat;
            }
            return a.seq > b.seq;
        }
    };
    std::priority_queue<Item, std::vector<Item>, Later> heap_;
    uint64_t seq_ = 0;
};

} // namespace qntn::sim

#include "qntn/sim/trace.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace qntn::sim {

using nlohmann::json;

namespace {

constexpr const char* kCategoryNames[kCategoryCount] = {
    "channel", "energy", "key", "flow", "handover", "fallback", "control", "violation"};

} // namespace

const char* to_string(Category c) { return kCategoryNames[static_cast<int>(c)]; }

Category category_from_string(const std::string& s) {
    for (int i = 0; i < kCategoryCount; ++i) {
        if (s == kCategoryNames[i]) {
            return static_cast<Category>(i);
        }
    }
    throw TraceError("unknown trace category '" + s + "'");
}

TraceWriter::TraceWriter(json header) {
    header["format_version"] = kTraceFormatVersion;
    header["kind"] = "header";
    text_ = header.dump();
    text_ += '\n';
}

void TraceWriter::add(double t, Category cat, const std::string& type, json fields) {
    if (!std::isfinite(t)) {
        throw std::logic_error("trace record time is not finite");
    }
    if (count_ > 0 && t < last_t_) {
        throw std::logic_error("trace record at t=" + std::to_string(t) +
                               " precedes the previous record");
    }
    json rec = json::object();
    rec["t"] = t;
    rec["cat"] = to_string(cat);
    rec["type"] = type;
    if (fields.is_object()) {
        for (auto& [k, v] : fields.items()) {
            rec[k] = std::move(v);
        }
    }
    text_ += rec.dump();
    text_ += '\n';
    last_t_ = t;
    ++count_;
}

TraceFile parse_trace(std::istream& in) {
    TraceFile f;
    std::string line;
    size_t lineno = 0;
    double last = -INFINITY;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw TraceError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (f.header.is_null()) {
            if (!j.is_object() || j.value("kind", "") != "header") {
                throw TraceError("first line is not a trace header");
            }
            if (j.value("format_version", -1) != kTraceFormatVersion) {
                throw TraceError("unsupported trace format_version");
            }
            f.header = std::move(j);
            continue;
        }
        if (!j.is_object() || !j.contains("t") || !j.contains("cat") || !j.contains("type") ||
            !j["t"].is_number()) {
            throw TraceError("line " + std::to_string(lineno) + ": malformed record");
        }
        category_from_string(j["cat"].get<std::string>());
        const double t = j["t"].get<double>();
        if (t < last) {
            throw TraceError("line " + std::to_string(lineno) + ": time decreases");
        }
        last = t;
        f.records.push_back(std::move(j));
    }
    if (f.header.is_null()) {
        throw TraceError("empty trace");
    }
    return f;
}

TraceFile parse_trace_text(const std::string& text) {
    std::istringstream in(text);
    return parse_trace(in);
}

TraceFile read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw TraceError("cannot open trace " + path);
    }
    return parse_trace(in);
}

std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void EventQueue::push(double t, Category cat, Action a) {
    heap_.push(Item{t, static_cast<int>(cat), seq_++, std::move(a)});
}

double EventQueue::next_time() const {
    if (heap_.empty()) {
        throw std::logic_error("EventQueue::next_time on empty queue");
    }
    return heap_.top().t;
}

size_t EventQueue::run_until(double t_end) {
    size_t n = 0;
    while (!heap_.empty() && heap_.top().t <= t_end) {
        Item it = heap_.top();
        heap_.pop();
        it.action(it.t);
        ++n;
    }
    return n;
}

} // namespace qntn::sim

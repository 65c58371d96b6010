#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "qsched/error.hpp"

namespace qsched {

enum class EventKind : std::uint8_t { Arrival, ServiceCompletion, Reclassification, FBLevelChange, MeasurementTick };

inline std::string_view event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::Arrival: return "arrival";
        case EventKind::ServiceCompletion: return "completion";
        case EventKind::Reclassification: return "reclassification";
        case EventKind::FBLevelChange: return "fb_level_change";
        case EventKind::MeasurementTick: return "tick";
    }
    return "unknown";
}

struct Event {
    double time = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::Arrival;
    std::int32_t server = -1;
    std::int64_t job = -1;
};

struct EventHandle {
    std::uint32_t slot = UINT32_MAX;
    std::uint32_t generation = 0;

    bool valid() const noexcept { return slot != UINT32_MAX; }
};

/// Binary min-heap on (time, seq) with O(log n) cancellation through handles.
///
/// Handles carry a generation count, so cancelling an event that already
/// fired (or whose slot was reused) is a harmless no-op.
class EventQueue {
public:
    EventHandle schedule(double time, EventKind kind, std::int32_t server = -1, std::int64_t job = -1) {
        std::uint32_t s;
        if (!free_.empty()) {
            s = free_.back();
            free_.pop_back();
        } else {
            s = static_cast<std::uint32_t>(slots_.size());
            slots_.push_back({});
        }
        Slot& sl = slots_[s];
        sl.ev = Event{time, next_seq_++, kind, server, job};
        sl.live = true;
        sl.pos = static_cast<std::uint32_t>(heap_.size());
        heap_.push_back(s);
        sift_up(sl.pos);
        return {s, sl.generation};
    }

    bool cancel(EventHandle h) {
        if (!is_pending(h)) return false;
        remove_at(slots_[h.slot].pos);
        release(h.slot);
        return true;
    }

    bool is_pending(EventHandle h) const noexcept {
        return h.valid() && h.slot < slots_.size() && slots_[h.slot].live && slots_[h.slot].generation == h.generation;
    }

    bool empty() const noexcept { return heap_.empty(); }
    std::size_t size() const noexcept { return heap_.size(); }

    const Event& top() const {
        if (heap_.empty()) throw NumericalError("EventQueue::top on empty queue");
        return slots_[heap_.front()].ev;
    }

    Event pop() {
        if (heap_.empty()) throw NumericalError("EventQueue::pop on empty queue");
        const std::uint32_t s = heap_.front();
        Event ev = slots_[s].ev;
        remove_at(0);
        release(s);
        return ev;
    }

    void clear() {
        heap_.clear();
        slots_.clear();
        free_.clear();
        next_seq_ = 0;
    }

private:
    struct Slot {
        Event ev;
        std::uint32_t pos = 0;
        std::uint32_t generation = 0;
        bool live = false;
    };

    bool less(std::uint32_t a, std::uint32_t b) const noexcept {
        const Event& x = slots_[a].ev;
        const Event& y = slots_[b].ev;
        return x.time < y.time || (x.time == y.time && x.seq < y.seq);
    }

    void place(std::uint32_t i, std::uint32_t s) noexcept {
        heap_[i] = s;
        slots_[s].pos = i;
    }

    void sift_up(std::uint32_t i) noexcept {
        const std::uint32_t s = heap_[i];
        while (i > 0) {
            const std::uint32_t p = (i - 1) / 2;
            if (!less(s, heap_[p])) break;
            place(i, heap_[p]);
            i = p;
        }
        place(i, s);
    }

    void sift_down(std::uint32_t i) noexcept {
        const std::uint32_t n = static_cast<std::uint32_t>(heap_.size());
        const std::uint32_t s = heap_[i];
        for (;;) {
            std::uint32_t c = 2 * i + 1;
            if (c >= n) break;
            if (c + 1 < n && less(heap_[c + 1], heap_[c])) ++c;
            if (!less(heap_[c], s)) break;
            place(i, heap_[c]);
            i = c;
        }
        place(i, s);
    }

    void remove_at(std::uint32_t i) {
        const std::uint32_t last = static_cast<std::uint32_t>(heap_.size() - 1);
        if (i != last) {
            place(i, heap_[last]);
            heap_.pop_back();
            sift_down(i);
            sift_up(i);
        } else {
            heap_.pop_back();
        }
    }

    void release(std::uint32_t s) {
        slots_[s].live = false;
        ++slots_[s].generation;
        free_.push_back(s);
    }

    std::vector<Slot> slots_;
    std::vector<std::uint32_t> heap_;
    std::vector<std::uint32_t> free_;
    std::uint64_t next_seq_ = 0;
};

}  // namespace qsched

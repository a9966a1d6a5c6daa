// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iterator>
#include <memory>
#include <optional>
#include <utility>

namespace agentloom {

/// Single-consumer pull stream. `next()` returns the following item or nullopt at the end;
/// it may throw to signal a failure after the last good item. `cancel()` stops the stream:
/// every later `next()` returns nullopt. The close callback runs once, on end or cancel.
template <class T>
class Stream {
public:
    using NextFn = std::function<std::optional<T>()>;
    using CloseFn = std::function<void()>;

    Stream() = default;
    explicit Stream(NextFn next, CloseFn on_close = {})
        : next_(std::move(next)), on_close_(std::move(on_close)) {}

    Stream(Stream&& other) noexcept
        : next_(std::move(other.next_)), on_close_(std::move(other.on_close_)),
          done_(std::exchange(other.done_, true)), cancelled_(other.cancelled_) {}

    Stream& operator=(Stream&& other) noexcept
    {
        if (this != &other) {
            cancel();
            next_ = std::move(other.next_);
            on_close_ = std::move(other.on_close_);
            done_ = std::exchange(other.done_, true);
            cancelled_ = other.cancelled_;
        }
        return *this;
    }

    Stream(const Stream&) = delete;
    Stream& operator=(const Stream&) = delete;

    ~Stream() { cancel(); }

    std::optional<T> next()
    {
        if (done_ || !next_)
            return std::nullopt;
        std::optional<T> item;
        try {
            item = next_();
        } catch (...) {
            finish();
            throw;
        }
        if (!item)
            finish();
        return item;
    }

    void cancel()
    {
        if (done_)
            return;
        cancelled_ = true;
        finish();
    }

    bool cancelled() const noexcept { return cancelled_; }
    bool done() const noexcept { return done_; }

    /// Drains the stream and returns the last item.
    std::optional<T> last()
    {
        std::optional<T> result;
        while (auto item = next())
            result = std::move(item);
        return result;
    }

    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = T;
        using difference_type = std::ptrdiff_t;
        using pointer = T*;
        using reference = T&;

        iterator() = default;
        explicit iterator(Stream* s) : stream_(s) { advance(); }

        T& operator*() { return *current_; }
        T* operator->() { return &*current_; }
        iterator& operator++()
        {
            advance();
            return *this;
        }
        void operator++(int) { advance(); }
        bool operator==(const iterator& other) const { return stream_ == other.stream_; }

    private:
        void advance()
        {
            current_ = stream_->next();
            if (!current_)
                stream_ = nullptr;
        }

        Stream* stream_ = nullptr;
        std::optional<T> current_;
    };

    iterator begin() { return iterator(this); }
    iterator end() { return iterator(); }

    /// A stream over a fixed sequence.
    template <class Container>
    static Stream from(Container items)
    {
        auto state = std::make_shared<std::pair<Container, std::size_t>>(std::move(items), 0);
        return Stream([state]() -> std::optional<T> {
            if (state->second >= state->first.size())
                return std::nullopt;
            return state->first[state->second++];
        });
    }

private:
    void finish()
    {
        done_ = true;
        auto cb = std::exchange(on_close_, {});
        next_ = {};
        if (cb)
            cb();
    }

    NextFn next_;
    CloseFn on_close_;
    bool done_ = false;
    bool cancelled_ = false;
};

} // namespace agentloom

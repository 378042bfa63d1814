#pragma once

#include <utility>
#include <vector>

namespace tbhunt {

/// Boolean expression tree over an arbitrary leaf type.
///
/// Used for TBQL operation expressions, TBQL attribute expressions and the
/// store's compiled entity predicates. And/Or nodes are n-ary and kept flat:
/// a child of an And is never itself an And (same for Or), so two trees that
/// differ only in redundant parentheses compare equal.
template <class Leaf>
struct BoolExpr {
    enum class Kind { Atom, Not, And, Or };

    Kind kind = Kind::Atom;
    Leaf leaf{};
    std::vector<BoolExpr> children;

    static BoolExpr make_leaf(Leaf value) {
        BoolExpr e;
        e.kind = Kind::Atom;
        e.leaf = std::move(value);
        return e;
    }

    static BoolExpr negate(BoolExpr inner) {
        BoolExpr e;
        e.kind = Kind::Not;
        e.children.push_back(std::move(inner));
        return e;
    }

    static BoolExpr all_of(std::vector<BoolExpr> parts) { return combine(Kind::And, std::move(parts)); }
    static BoolExpr any_of(std::vector<BoolExpr> parts) { return combine(Kind::Or, std::move(parts)); }

    bool is_leaf() const { return kind == Kind::Atom; }

    template <class Pred>
    bool evaluate(Pred&& pred) const {
        switch (kind) {
            case Kind::Atom:
                return pred(leaf);
            case Kind::Not:
                return !children.front().evaluate(pred);
            case Kind::And:
                for (const auto& c : children)
                    if (!c.evaluate(pred)) return false;
                return true;
            case Kind::Or:
                for (const auto& c : children)
                    if (c.evaluate(pred)) return true;
                return false;
        }
        return false;
    }

    template <class Fn>
    void for_each_leaf(Fn&& fn) const {
        if (kind == Kind::Atom) {
            fn(leaf);
            return;
        }
        for (const auto& c : children) c.for_each_leaf(fn);
    }

    template <class Fn>
    void for_each_leaf_mut(Fn&& fn) {
        if (kind == Kind::Atom) {
            fn(leaf);
            return;
        }
        for (auto& c : children) c.for_each_leaf_mut(fn);
    }

    std::size_t leaf_count() const {
        std::size_t n = 0;
        for_each_leaf([&n](const Leaf&) { ++n; });
        return n;
    }

    bool operator==(const BoolExpr&) const = default;

private:
    static BoolExpr combine(Kind k, std::vector<BoolExpr> parts) {
        if (parts.size() == 1) return std::move(parts.front());
        BoolExpr e;
        e.kind = k;
        for (auto& p : parts) {
            if (p.kind == k) {
                for (auto& c : p.children) e.children.push_back(std::move(c));
            } else {
                e.children.push_back(std::move(p));
            }
        }
        return e;
    }
};

}  // namespace tbhunt

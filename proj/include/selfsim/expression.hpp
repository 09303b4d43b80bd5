#pragma once

// A small total expression language for user-supplied fields.
//
//   expr    ::= term { ('+' | '-') term }
//   term    ::= unary { ('*' | '/') unary }
//   unary   ::= '-' unary | power
//   power   ::= postfix [ '^' unary ]            (right-associative, tighter than unary '-')
//   postfix ::= primary [ '[' integer ']' ]      (1-based component of a point variable)
//   primary ::= number | identifier | identifier '(' expr { ',' expr } ')' | '(' expr ')'
//
// Functions: exp sin cos abs sqrt (scalar -> scalar), dist2(point, point).
// Constant: pi. Point variables may only appear as dist2 arguments or indexed.

#include <selfsim/errors.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfsim {

/// Variable roles: KERNEL {x, y: point}, COUPLING {u, v}, FORCING {t, u}, INITIAL {x: point}.
enum class Scope { Kernel, Coupling, Forcing, Initial };

inline std::string_view to_string(Scope s) noexcept {
    switch (s) {
    case Scope::Kernel: return "kernel";
    case Scope::Coupling: return "coupling";
    case Scope::Forcing: return "forcing";
    case Scope::Initial: return "initial";
    }
    return "?";
}

/// Values for the scope variables. Kernel: points {x, y}; Initial: points {x};
/// Coupling: scalars {u, v}; Forcing: scalars {t, u}.
struct Bindings {
    std::array<double, 2> scalars{};
    std::array<std::span<const double>, 2> points{};
};

struct ExprNode {
    enum class Kind { Number, Scalar, Point, Component, Negate, Binary, Call };

    Kind kind = Kind::Number;
    double value = 0.0;     // Number
    std::string name;       // Scalar / Point / Component / Call
    int slot = 0;           // variable slot in Bindings
    int index = 0;          // Component, 1-based
    char op = 0;            // Binary
    std::vector<std::shared_ptr<const ExprNode>> children;
    std::size_t offset = 0; // byte offset in the source

    bool is_point() const noexcept { return kind == Kind::Point; }
};

using ExprNodePtr = std::shared_ptr<const ExprNode>;

inline bool structurally_equal(const ExprNode& a, const ExprNode& b) {
    if (a.kind != b.kind || a.name != b.name || a.slot != b.slot || a.index != b.index || a.op != b.op ||
        a.children.size() != b.children.size())
        return false;
    if (a.kind == ExprNode::Kind::Number && !(a.value == b.value)) return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!structurally_equal(*a.children[i], *b.children[i])) return false;
    return true;
}

namespace detail {

enum class OpCode : unsigned char { Const, Scalar, Comp, Dist2, Neg, Add, Sub, Mul, Div, Pow, Exp, Sin, Cos, Abs, Sqrt };

struct Instr {
    OpCode op;
    int a = 0;
    int b = 0;
    double value = 0.0;
};

struct VariableInfo {
    std::string_view name;
    bool point;
    int slot;
};

inline std::vector<VariableInfo> scope_variables(Scope s) {
    switch (s) {
    case Scope::Kernel: return {{"x", true, 0}, {"y", true, 1}};
    case Scope::Coupling: return {{"u", false, 0}, {"v", false, 1}};
    case Scope::Forcing: return {{"t", false, 0}, {"u", false, 1}};
    case Scope::Initial: return {{"x", true, 0}};
    }
    return {};
}

/// Shortest "%.*g" rendering that parses back to the same double.
inline std::string format_number(double x) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

class Parser {
public:
    Parser(std::string_view src, Scope scope) : src_(src), scope_(scope), vars_(scope_variables(scope)) {}

    ExprNodePtr parse() {
        auto e = expression();
        skip_space();
        if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
        require_scalar(*e);
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }
    [[noreturn]] void fail_at(const std::string& what, std::size_t at) const { throw ParseError(what, at); }

    void skip_space() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= src_.size()) fail(std::string("expected '") + c + "' but reached end of input");
            fail(std::string("expected '") + c + "'");
        }
    }

    void require_scalar(const ExprNode& n) const {
        if (n.is_point())
            fail_at("point variable '" + n.name + "' used as a scalar (index it or pass it to dist2)", n.offset);
    }

    static ExprNodePtr make(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

    ExprNodePtr expression() {
        auto lhs = term();
        for (;;) {
            skip_space();
            const auto at = pos_;
            if (accept('+') || accept('-')) {
                const char op = src_[at];
                auto rhs = term();
                lhs = binary(op, std::move(lhs), std::move(rhs), at);
            } else {
                return lhs;
            }
        }
    }

    ExprNodePtr term() {
        auto lhs = unary();
        for (;;) {
            skip_space();
            const auto at = pos_;
            if (accept('*') || accept('/')) {
                const char op = src_[at];
                auto rhs = unary();
                lhs = binary(op, std::move(lhs), std::move(rhs), at);
            } else {
                return lhs;
            }
        }
    }

    ExprNodePtr unary() {
        skip_space();
        const auto at = pos_;
        if (accept('-')) {
            auto operand = unary();
            require_scalar(*operand);
            ExprNode n;
            n.kind = ExprNode::Kind::Negate;
            n.children = {std::move(operand)};
            n.offset = at;
            return make(std::move(n));
        }
        return power();
    }

    ExprNodePtr power() {
        auto base = postfix();
        skip_space();
        const auto at = pos_;
        if (accept('^')) {
            auto exponent = unary();
            return binary('^', std::move(base), std::move(exponent), at);
        }
        return base;
    }

    ExprNodePtr binary(char op, ExprNodePtr lhs, ExprNodePtr rhs, std::size_t at) const {
        require_scalar(*lhs);
        require_scalar(*rhs);
        ExprNode n;
        n.kind = ExprNode::Kind::Binary;
        n.op = op;
        n.children = {std::move(lhs), std::move(rhs)};
        n.offset = at;
        return make(std::move(n));
    }

    ExprNodePtr postfix() {
        auto e = primary();
        skip_space();
        const auto at = pos_;
        if (accept('[')) {
            if (!e->is_point()) fail_at("only point variables can be indexed", at);
            skip_space();
            const auto start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (start == pos_) fail("expected a component index");
            const int index = std::atoi(std::string(src_.substr(start, pos_ - start)).c_str());
            if (index < 1) fail_at("component indices are 1-based", start);
            expect(']');
            ExprNode n;
            n.kind = ExprNode::Kind::Component;
            n.name = e->name;
            n.slot = e->slot;
            n.index = index;
            n.offset = e->offset;
            return make(std::move(n));
        }
        return e;
    }

    ExprNodePtr primary() {
        skip_space();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const auto at = pos_;
        const char c = src_[pos_];
        if (accept('(')) {
            auto e = expression();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            const std::string ident(src_.substr(at, pos_ - at));
            skip_space();
            if (pos_ < src_.size() && src_[pos_] == '(') return call(ident, at);
            return variable(ident, at);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    ExprNodePtr number() {
        const auto at = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            auto save = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        const std::string text(src_.substr(at, pos_ - at));
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size() || text == ".") fail_at("malformed number '" + text + "'", at);
        if (!std::isfinite(v)) fail_at("number '" + text + "' is out of range", at);
        ExprNode n;
        n.kind = ExprNode::Kind::Number;
        n.value = v;
        n.offset = at;
        return make(std::move(n));
    }

    ExprNodePtr variable(const std::string& ident, std::size_t at) const {
        if (ident == "pi") {
            ExprNode n;
            n.kind = ExprNode::Kind::Number;
            n.value = std::numbers::pi;
            n.name = "pi";
            n.offset = at;
            return make(std::move(n));
        }
        for (const auto& v : vars_) {
            if (v.name == ident) {
                ExprNode n;
                n.kind = v.point ? ExprNode::Kind::Point : ExprNode::Kind::Scalar;
                n.name = ident;
                n.slot = v.slot;
                n.offset = at;
                return make(std::move(n));
            }
        }
        fail_at("unknown identifier '" + ident + "' in " + std::string(to_string(scope_)) + " scope", at);
    }

    ExprNodePtr call(const std::string& fn, std::size_t at) {
        expect('(');
        std::vector<ExprNodePtr> args;
        if (!accept(')')) {
            do {
                args.push_back(expression());
            } while (accept(','));
            expect(')');
        }
        const bool unary_fn = fn == "exp" || fn == "sin" || fn == "cos" || fn == "abs" || fn == "sqrt";
        if (unary_fn) {
            if (args.size() != 1)
                fail_at(fn + " expects 1 argument, got " + std::to_string(args.size()), at);
            require_scalar(*args[0]);
        } else if (fn == "dist2") {
            if (args.size() != 2) fail_at("dist2 expects 2 arguments, got " + std::to_string(args.size()), at);
            for (const auto& a : args)
                if (!a->is_point()) fail_at("dist2 arguments must be point variables", a->offset);
        } else {
            fail_at("unknown function '" + fn + "'", at);
        }
        ExprNode n;
        n.kind = ExprNode::Kind::Call;
        n.name = fn;
        n.children = std::move(args);
        n.offset = at;
        return make(std::move(n));
    }

    std::string_view src_;
    Scope scope_;
    std::vector<VariableInfo> vars_;
    std::size_t pos_ = 0;
};

inline void print_node(const ExprNode& n, std::string& out) {
    switch (n.kind) {
    case ExprNode::Kind::Number: out += n.name.empty() ? format_number(n.value) : n.name; return;
    case ExprNode::Kind::Scalar:
    case ExprNode::Kind::Point: out += n.name; return;
    case ExprNode::Kind::Component: out += n.name + "[" + std::to_string(n.index) + "]"; return;
    case ExprNode::Kind::Negate:
        out += "(-";
        print_node(*n.children[0], out);
        out += ")";
        return;
    case ExprNode::Kind::Binary:
        out += "(";
        print_node(*n.children[0], out);
        out += " ";
        out += n.op;
        out += " ";
        print_node(*n.children[1], out);
        out += ")";
        return;
    case ExprNode::Kind::Call:
        out += n.name + "(";
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            if (i > 0) out += ", ";
            print_node(*n.children[i], out);
        }
        out += ")";
        return;
    }
}

/// Post-order compilation; returns the stack depth needed by the subtree.
inline int compile_node(const ExprNode& n, std::vector<Instr>& code) {
    switch (n.kind) {
    case ExprNode::Kind::Number: code.push_back({OpCode::Const, 0, 0, n.value}); return 1;
    case ExprNode::Kind::Scalar: code.push_back({OpCode::Scalar, n.slot, 0, 0.0}); return 1;
    case ExprNode::Kind::Component: code.push_back({OpCode::Comp, n.slot, n.index - 1, 0.0}); return 1;
    case ExprNode::Kind::Point: break;
    case ExprNode::Kind::Negate: {
        const int d = compile_node(*n.children[0], code);
        code.push_back({OpCode::Neg});
        return d;
    }
    case ExprNode::Kind::Binary: {
        const int d0 = compile_node(*n.children[0], code);
        const int d1 = compile_node(*n.children[1], code);
        OpCode op = OpCode::Add;
        switch (n.op) {
        case '+': op = OpCode::Add; break;
        case '-': op = OpCode::Sub; break;
        case '*': op = OpCode::Mul; break;
        case '/': op = OpCode::Div; break;
        case '^': op = OpCode::Pow; break;
        }
        code.push_back({op});
        return std::max(d0, d1 + 1);
    }
    case ExprNode::Kind::Call: {
        if (n.name == "dist2") {
            code.push_back({OpCode::Dist2, n.children[0]->slot, n.children[1]->slot, 0.0});
            return 1;
        }
        const int d = compile_node(*n.children[0], code);
        OpCode op = OpCode::Exp;
        if (n.name == "sin") op = OpCode::Sin;
        else if (n.name == "cos") op = OpCode::Cos;
        else if (n.name == "abs") op = OpCode::Abs;
        else if (n.name == "sqrt") op = OpCode::Sqrt;
        code.push_back({op});
        return d;
    }
    }
    throw DomainError("cannot compile a bare point variable");
}

} // namespace detail

/// A parsed, type-checked and compiled expression. Immutable; eval is reentrant.
class Expr {
public:
    static Expr parse(std::string_view source, Scope scope) {
        Expr e;
        e.scope_ = scope;
        e.source_ = std::string(source);
        e.root_ = detail::Parser(e.source_, scope).parse();
        e.depth_ = detail::compile_node(*e.root_, e.code_);
        return e;
    }

    Scope scope() const noexcept { return scope_; }
    const std::string& source() const noexcept { return source_; }
    const ExprNode& root() const noexcept { return *root_; }

    /// Canonical form: binary operations and negations fully parenthesized.
    std::string print() const {
        std::string out;
        detail::print_node(*root_, out);
        return out;
    }

    bool structurally_equal(const Expr& other) const {
        return scope_ == other.scope_ && selfsim::structurally_equal(*root_, *other.root_);
    }

    double eval(const Bindings& b) const {
        constexpr int kInline = 32;
        std::array<double, kInline> small{};
        std::vector<double> big;
        double* stack = small.data();
        if (depth_ > kInline) {
            big.resize(static_cast<std::size_t>(depth_));
            stack = big.data();
        }
        int top = -1;
        using detail::OpCode;
        for (const auto& ins : code_) {
            switch (ins.op) {
            case OpCode::Const: stack[++top] = ins.value; break;
            case OpCode::Scalar: stack[++top] = b.scalars[static_cast<std::size_t>(ins.a)]; break;
            case OpCode::Comp: {
                const auto p = b.points[static_cast<std::size_t>(ins.a)];
                if (static_cast<std::size_t>(ins.b) >= p.size())
                    throw EvalError("component " + std::to_string(ins.b + 1) + " out of range for a point of dimension " +
                                    std::to_string(p.size()) + " in '" + source_ + "'");
                stack[++top] = p[static_cast<std::size_t>(ins.b)];
                break;
            }
            case OpCode::Dist2: {
                const auto p = b.points[static_cast<std::size_t>(ins.a)];
                const auto q = b.points[static_cast<std::size_t>(ins.b)];
                if (p.size() != q.size()) throw EvalError("dist2 of points with different dimensions");
                double s = 0.0;
                for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
                stack[++top] = s;
                break;
            }
            case OpCode::Neg: stack[top] = -stack[top]; break;
            case OpCode::Add: --top; stack[top] += stack[top + 1]; break;
            case OpCode::Sub: --top; stack[top] -= stack[top + 1]; break;
            case OpCode::Mul: --top; stack[top] *= stack[top + 1]; break;
            case OpCode::Div: --top; stack[top] /= stack[top + 1]; break;
            case OpCode::Pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
            case OpCode::Exp: stack[top] = std::exp(stack[top]); break;
            case OpCode::Sin: stack[top] = std::sin(stack[top]); break;
            case OpCode::Cos: stack[top] = std::cos(stack[top]); break;
            case OpCode::Abs: stack[top] = std::abs(stack[top]); break;
            case OpCode::Sqrt: stack[top] = std::sqrt(stack[top]); break;
            }
        }
        const double r = stack[0];
        if (!std::isfinite(r)) throw EvalError("non-finite value from '" + source_ + "'");
        return r;
    }

    // Role-specific conveniences.
    double operator()(std::span<const double> x, std::span<const double> y) const {
        Bindings b;
        b.points = {x, y};
        return eval(b);
    }
    double operator()(std::span<const double> x) const {
        Bindings b;
        b.points = {x, {}};
        return eval(b);
    }
    double scalar2(double first, double second) const {
        Bindings b;
        b.scalars = {first, second};
        return eval(b);
    }

private:
    Expr() = default;

    Scope scope_ = Scope::Initial;
    std::string source_;
    ExprNodePtr root_;
    std::vector<detail::Instr> code_;
    int depth_ = 0;
};

inline Expr parse(std::string_view source, Scope scope) { return Expr::parse(source, scope); }

inline double eval(const Expr& e, const Bindings& b) { return e.eval(b); }

} // namespace selfsim

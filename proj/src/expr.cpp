#include "snell/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "snell/errors.hpp"

namespace snell {

double Expr::eval(double t, std::span<const double> x) const {
    switch (kind) {
        case Kind::Constant: return value;
        case Kind::VarT: return t;
        case Kind::VarX: return x[static_cast<std::size_t>(index)];
        case Kind::Neg: return -lhs->eval(t, x);
        case Kind::Exp: return std::exp(lhs->eval(t, x));
        case Kind::Log: return std::log(lhs->eval(t, x));
        case Kind::Sqrt: return std::sqrt(lhs->eval(t, x));
        case Kind::Abs: return std::fabs(lhs->eval(t, x));
        case Kind::Add: return lhs->eval(t, x) + rhs->eval(t, x);
        case Kind::Sub: return lhs->eval(t, x) - rhs->eval(t, x);
        case Kind::Mul: return lhs->eval(t, x) * rhs->eval(t, x);
        case Kind::Div: return lhs->eval(t, x) / rhs->eval(t, x);
        case Kind::Pow: return std::pow(lhs->eval(t, x), rhs->eval(t, x));
        case Kind::Max: return std::fmax(lhs->eval(t, x), rhs->eval(t, x));
        case Kind::Min: return std::fmin(lhs->eval(t, x), rhs->eval(t, x));
    }
    return 0.0;
}

bool Expr::equals(const Expr& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
        case Kind::Constant: return value == o.value;
        case Kind::VarT: return true;
        case Kind::VarX: return index == o.index;
        default: break;
    }
    if ((lhs == nullptr) != (o.lhs == nullptr)) return false;
    if ((rhs == nullptr) != (o.rhs == nullptr)) return false;
    if (lhs && !lhs->equals(*o.lhs)) return false;
    if (rhs && !rhs->equals(*o.rhs)) return false;
    return true;
}

ExprPtr Expr::clone() const {
    auto e = std::make_unique<Expr>();
    e->kind = kind;
    e->value = value;
    e->index = index;
    if (lhs) e->lhs = lhs->clone();
    if (rhs) e->rhs = rhs->clone();
    return e;
}

namespace {

// binding strength used when deciding where print() needs parentheses
int precedence(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::Add:
        case Expr::Kind::Sub: return 1;
        case Expr::Kind::Mul:
        case Expr::Kind::Div: return 2;
        case Expr::Kind::Neg: return 3;
        case Expr::Kind::Pow: return 4;
        default: return 5;  // atoms and calls never need parens
    }
}

std::string fmt_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string Expr::print() const {
    auto wrap = [](const Expr& child, int min_prec) {
        std::string s = child.print();
        if (precedence(child.kind) < min_prec) return "(" + s + ")";
        return s;
    };
    switch (kind) {
        case Kind::Constant: return fmt_value(value);
        case Kind::VarT: return "t";
        case Kind::VarX: return "x_" + std::to_string(index + 1);
        case Kind::Neg: return "-" + wrap(*lhs, precedence(Kind::Neg) + 1);
        case Kind::Exp: return "exp(" + lhs->print() + ")";
        case Kind::Log: return "log(" + lhs->print() + ")";
        case Kind::Sqrt: return "sqrt(" + lhs->print() + ")";
        case Kind::Abs: return "abs(" + lhs->print() + ")";
        case Kind::Add: return wrap(*lhs, 1) + " + " + wrap(*rhs, 2);
        case Kind::Sub: return wrap(*lhs, 1) + " - " + wrap(*rhs, 2);
        case Kind::Mul: return wrap(*lhs, 2) + "*" + wrap(*rhs, 3);
        case Kind::Div: return wrap(*lhs, 2) + "/" + wrap(*rhs, 3);
        // '^' is right-associative: left operand needs strictly higher binding
        case Kind::Pow: return wrap(*lhs, 5) + "^" + wrap(*rhs, 3);
        case Kind::Max: return "max(" + lhs->print() + ", " + rhs->print() + ")";
        case Kind::Min: return "min(" + lhs->print() + ", " + rhs->print() + ")";
    }
    return "";
}

namespace {

class Parser {
public:
    Parser(const std::string& src, int max_x) : src_(src), max_x_(max_x) {}

    ExprPtr run() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("empty expression", 0);
        ExprPtr e = parse_sum();
        skip_ws();
        if (pos_ < src_.size())
            throw ParseError("unexpected trailing input at offset " + std::to_string(pos_), pos_);
        return e;
    }

private:
    ExprPtr parse_sum() {
        ExprPtr e = parse_product();
        for (;;) {
            skip_ws();
            if (accept('+'))
                e = make_binary(Expr::Kind::Add, std::move(e), parse_product());
            else if (accept('-'))
                e = make_binary(Expr::Kind::Sub, std::move(e), parse_product());
            else
                return e;
        }
    }

    ExprPtr parse_product() {
        ExprPtr e = parse_unary();
        for (;;) {
            skip_ws();
            if (accept('*'))
                e = make_binary(Expr::Kind::Mul, std::move(e), parse_unary());
            else if (accept('/'))
                e = make_binary(Expr::Kind::Div, std::move(e), parse_unary());
            else
                return e;
        }
    }

    ExprPtr parse_unary() {
        skip_ws();
        if (accept('-')) return make_unary(Expr::Kind::Neg, parse_unary());
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_primary();
        skip_ws();
        if (accept('^')) {
            // right-associative; exponent may carry a unary minus
            return make_binary(Expr::Kind::Pow, std::move(base), parse_unary());
        }
        return base;
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_sum();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        throw ParseError(std::string("unexpected character '") + c + "' at offset " + std::to_string(pos_), pos_);
    }

    ExprPtr parse_number() {
        const char* begin = src_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError("malformed number at offset " + std::to_string(pos_), pos_);
        pos_ += static_cast<std::size_t>(end - begin);
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::Constant;
        e->value = v;
        return e;
    }

    ExprPtr parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string name = src_.substr(start, pos_ - start);

        if (name == "t") return make_leaf(Expr::Kind::VarT, 0);
        if (name == "x") return make_var_x(0, start);
        if (name.size() > 2 && name.rfind("x_", 0) == 0) {
            int idx = 0;
            for (std::size_t i = 2; i < name.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(name[i])))
                    throw ParseError("unknown identifier '" + name + "' at offset " + std::to_string(start), start);
                idx = idx * 10 + (name[i] - '0');
            }
            if (idx < 1)
                throw ParseError("state index must be >= 1 at offset " + std::to_string(start), start);
            return make_var_x(idx - 1, start);
        }

        Expr::Kind k;
        int arity;
        if (name == "exp") { k = Expr::Kind::Exp; arity = 1; }
        else if (name == "log") { k = Expr::Kind::Log; arity = 1; }
        else if (name == "sqrt") { k = Expr::Kind::Sqrt; arity = 1; }
        else if (name == "abs") { k = Expr::Kind::Abs; arity = 1; }
        else if (name == "max") { k = Expr::Kind::Max; arity = 2; }
        else if (name == "min") { k = Expr::Kind::Min; arity = 2; }
        else
            throw ParseError("unknown identifier '" + name + "' at offset " + std::to_string(start), start);

        skip_ws();
        expect('(');
        ExprPtr first = parse_sum();
        if (arity == 1) {
            skip_ws();
            if (src_.size() > pos_ && src_[pos_] == ',')
                throw ParseError(name + " takes one argument (offset " + std::to_string(pos_) + ")", pos_);
            expect(')');
            return make_unary(k, std::move(first));
        }
        skip_ws();
        if (!accept(','))
            throw ParseError(name + " takes two arguments (offset " + std::to_string(pos_) + ")", pos_);
        ExprPtr second = parse_sum();
        expect(')');
        return make_binary(k, std::move(first), std::move(second));
    }

    ExprPtr make_var_x(int zero_based, std::size_t at) {
        if (zero_based >= max_x_)
            throw ParseError("state component x_" + std::to_string(zero_based + 1) +
                                 " exceeds dimension (offset " + std::to_string(at) + ")",
                             at);
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::VarX;
        e->index = zero_based;
        return e;
    }

    static ExprPtr make_leaf(Expr::Kind k, int idx) {
        auto e = std::make_unique<Expr>();
        e->kind = k;
        e->index = idx;
        return e;
    }

    static ExprPtr make_unary(Expr::Kind k, ExprPtr a) {
        auto e = std::make_unique<Expr>();
        e->kind = k;
        e->lhs = std::move(a);
        return e;
    }

    static ExprPtr make_binary(Expr::Kind k, ExprPtr a, ExprPtr b) {
        auto e = std::make_unique<Expr>();
        e->kind = k;
        e->lhs = std::move(a);
        e->rhs = std::move(b);
        return e;
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (!accept(c))
            throw ParseError(std::string("expected '") + c + "' at offset " + std::to_string(pos_), pos_);
    }

    const std::string& src_;
    int max_x_;
    std::size_t pos_ = 0;
};

}  // namespace

ExprPtr parse_expr(const std::string& src, int max_state_index) {
    return Parser(src, max_state_index).run();
}

}  // namespace snell

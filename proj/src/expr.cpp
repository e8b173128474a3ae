#include "ofsafe/expr.hpp"

#include <cctype>
#include <cmath>
#include <vector>

namespace ofsafe {

struct Expr::Node {
    enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Fun };
    enum class Fn { Sin, Cos, Exp, Ln, Abs, Sqrt };

    Kind kind;
    double value = 0.0; // Number
    int var = 0;        // Variable, 0-based
    Fn fn = Fn::Sin;
    std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = Expr::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_num(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Number;
    n->value = v;
    return n;
}

NodePtr make_bin(Node::Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

class Parser {
  public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr run() {
        NodePtr e = expression();
        skip_ws();
        if (pos_ != text_.size()) throw ParseError(pos_, "unexpected trailing input");
        return e;
    }

  private:
    std::string_view text_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            if (eat('+')) lhs = make_bin(Node::Kind::Add, lhs, term());
            else if (eat('-')) lhs = make_bin(Node::Kind::Sub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (eat('*')) lhs = make_bin(Node::Kind::Mul, lhs, unary());
            else if (eat('/')) lhs = make_bin(Node::Kind::Div, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Negate;
            n->lhs = unary();
            return n;
        }
        if (eat('+')) return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (eat('^')) return make_bin(Node::Kind::Pow, base, unary()); // right associative
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError(pos_, "unexpected end of expression");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = expression();
            if (!eat(')')) throw ParseError(pos_, "expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw ParseError(pos_, std::string("unexpected character '") + c + "'");
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
            ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t mark = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) pos_ = mark;
            else
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        std::string tok(text_.substr(start, pos_ - start));
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return make_num(v);
        } catch (const std::exception&) {
            throw ParseError(start, "malformed numeric literal '" + tok + "'");
        }
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        if (name.size() >= 2 && name[0] == 'x' && std::isdigit(static_cast<unsigned char>(name[1]))) {
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i])))
                    throw ParseError(start, "malformed variable name '" + name + "'");
            int idx = std::stoi(name.substr(1));
            if (idx < 1) throw ParseError(start, "variable index must be at least 1");
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Variable;
            n->var = idx - 1;
            return n;
        }
        Node::Fn fn;
        if (name == "sin") fn = Node::Fn::Sin;
        else if (name == "cos") fn = Node::Fn::Cos;
        else if (name == "exp") fn = Node::Fn::Exp;
        else if (name == "ln") fn = Node::Fn::Ln;
        else if (name == "abs") fn = Node::Fn::Abs;
        else if (name == "sqrt") fn = Node::Fn::Sqrt;
        else throw ParseError(start, "unknown identifier '" + name + "'");
        if (!eat('(')) throw ParseError(pos_, "expected '(' after function '" + name + "'");
        NodePtr arg = expression();
        if (!eat(')')) throw ParseError(pos_, "expected ')' closing call to '" + name + "'");
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Fun;
        n->fn = fn;
        n->lhs = std::move(arg);
        return n;
    }
};

double eval_node(const Node& n, std::span<const double> x) {
    switch (n.kind) {
        case Node::Kind::Number: return n.value;
        case Node::Kind::Variable: return x[static_cast<std::size_t>(n.var)];
        case Node::Kind::Negate: return -eval_node(*n.lhs, x);
        case Node::Kind::Add: return eval_node(*n.lhs, x) + eval_node(*n.rhs, x);
        case Node::Kind::Sub: return eval_node(*n.lhs, x) - eval_node(*n.rhs, x);
        case Node::Kind::Mul: return eval_node(*n.lhs, x) * eval_node(*n.rhs, x);
        case Node::Kind::Div: return eval_node(*n.lhs, x) / eval_node(*n.rhs, x);
        case Node::Kind::Pow: return std::pow(eval_node(*n.lhs, x), eval_node(*n.rhs, x));
        case Node::Kind::Fun: {
            double a = eval_node(*n.lhs, x);
            switch (n.fn) {
                case Node::Fn::Sin: return std::sin(a);
                case Node::Fn::Cos: return std::cos(a);
                case Node::Fn::Exp: return std::exp(a);
                case Node::Fn::Ln: return std::log(a);
                case Node::Fn::Abs: return std::abs(a);
                case Node::Fn::Sqrt: return std::sqrt(a);
            }
        }
    }
    return 0.0;
}

int max_var_node(const Node& n) {
    int best = 0;
    if (n.kind == Node::Kind::Variable) best = n.var + 1;
    if (n.lhs) best = std::max(best, max_var_node(*n.lhs));
    if (n.rhs) best = std::max(best, max_var_node(*n.rhs));
    return best;
}

} // namespace

Expr Expr::parse(std::string_view text) {
    Expr e;
    e.text_ = std::string(text);
    e.root_ = Parser(text).run();
    return e;
}

double Expr::eval(std::span<const double> x) const {
    if (!root_) throw Error(ErrorKind::Config, "evaluating an empty expression");
    return eval_node(*root_, x);
}

int Expr::max_var() const { return root_ ? max_var_node(*root_) : 0; }

void Expr::validate_vars(int n) const {
    int mv = max_var();
    if (mv > n)
        throw Error(ErrorKind::Config, "expression '" + text_ + "' references x" + std::to_string(mv) +
                                           " but the system dimension is " + std::to_string(n));
}

} // namespace ofsafe

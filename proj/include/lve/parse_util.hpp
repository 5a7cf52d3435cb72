#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "lve/common.hpp"

namespace lve {

struct Token {
  enum Kind { Ident, Var, Number, Punct, End } kind = End;
  std::string text;
  double number = 0.0;
  int line = 0;
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  size_t i = 0;
  int line = 1;
  auto push = [&](Token::Kind k, std::string t, double n = 0.0) {
    out.push_back({k, std::move(t), n, line});
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') { ++line; ++i; continue; }
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    if (c == '%') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.' && j + 1 < src.size() &&
          std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      std::string t(src.substr(i, j - i));
      push(Token::Number, t, std::stod(t));
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) ||
                                src[j] == '_'))
        ++j;
      std::string t(src.substr(i, j - i));
      bool is_var = std::isupper(static_cast<unsigned char>(c)) || c == '_';
      push(is_var ? Token::Var : Token::Ident, t);
      i = j;
      continue;
    }
    if (c == ':' && i + 1 < src.size() && src[i + 1] == ':') {
      push(Token::Punct, "::");
      i += 2;
      continue;
    }
    if (c == ':' && i + 1 < src.size() && src[i + 1] == '-') {
      push(Token::Punct, ":-");
      i += 2;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && src[i + 1] == '+') {
      push(Token::Punct, "\\+");
      i += 2;
      continue;
    }
    if (std::string_view("().,;[]=/").find(c) != std::string_view::npos) {
      push(Token::Punct, std::string(1, c));
      ++i;
      continue;
    }
    throw ParseError("line " + std::to_string(line) + ": unexpected character '" +
                     std::string(1, c) + "'");
  }
  push(Token::End, "");
  return out;
}

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> toks) : toks_(std::move(toks)) {}
  const Token& peek(size_t ahead = 0) const {
    size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  Token next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  bool at_end() const { return peek().kind == Token::End; }
  bool accept(std::string_view punct) {
    if (peek().kind == Token::Punct && peek().text == punct) {
      next();
      return true;
    }
    return false;
  }
  void expect(std::string_view punct, const char* what) {
    if (!accept(punct))
      throw ParseError("line " + std::to_string(peek().line) + ": expected '" +
                       std::string(punct) + "' " + what + ", got '" +
                       peek().text + "'");
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace lve

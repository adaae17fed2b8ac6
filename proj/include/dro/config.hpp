#pragma once

// Flat "key = value" settings grouped in [sections], read and written as INI.
// Every key must be declared with a default before use, so unknown keys in a
// file are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dro/error.hpp"

namespace dro {

class Settings {
 public:
  /// Declares `section.key` with a default value (kept in declaration order).
  void declare(const std::string& dotted, const std::string& value, const std::string& help = {}) {
    if (!values_.count(dotted)) order_.push_back(dotted);
    values_[dotted] = value;
    help_[dotted] = help;
  }
  bool known(const std::string& dotted) const { return values_.count(dotted) > 0; }

  void set(const std::string& dotted, const std::string& value) {
    if (!known(dotted)) throw ConfigError("unknown setting: " + dotted);
    values_[dotted] = value;
  }

  std::string str(const std::string& dotted) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) throw ConfigError("undeclared setting: " + dotted);
    return it->second;
  }
  double num(const std::string& dotted) const {
    const auto s = str(dotted);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("setting " + dotted + " is not a number: '" + s + "'");
    }
  }
  long integer(const std::string& dotted) const {
    const double v = num(dotted);
    if (v != static_cast<double>(static_cast<long>(v))) throw ConfigError("setting " + dotted + " must be an integer");
    return static_cast<long>(v);
  }
  bool flag(const std::string& dotted) const {
    const auto s = str(dotted);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("setting " + dotted + " is not a boolean: '" + s + "'");
  }

  /// Overrides declared keys from an INI file; any undeclared key is an error.
  void load_ini(const std::filesystem::path& path) {
    boost::property_tree::ptree pt;
    try {
      boost::property_tree::ini_parser::read_ini(path.string(), pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("cannot parse config: ") + e.what());
    }
    for (const auto& [section, sub] : pt) {
      if (sub.empty()) throw ConfigError("config key outside a section: " + section);
      for (const auto& [key, val] : sub) {
        const std::string dotted = section + "." + key;
        if (!known(dotted)) throw ConfigError("unknown config key: " + dotted);
        values_[dotted] = val.get_value<std::string>();
      }
    }
  }

  std::string to_ini() const {
    std::map<std::string, std::vector<std::string>> by_section;
    std::vector<std::string> sections;
    for (const auto& d : order_) {
      const auto dot = d.find('.');
      const auto sec = d.substr(0, dot);
      if (!by_section.count(sec)) sections.push_back(sec);
      by_section[sec].push_back(d);
    }
    std::ostringstream os;
    for (const auto& sec : sections) {
      if (os.tellp() > 0) os << '\n';
      os << '[' << sec << "]\n";
      for (const auto& d : by_section[sec]) os << d.substr(sec.size() + 1) << " = " << values_.at(d) << '\n';
    }
    return os.str();
  }

  void save_ini(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_ini();
    if (!out) throw IoError("failed writing " + path.string());
  }

  const std::vector<std::string>& keys() const { return order_; }
  const std::string& help(const std::string& dotted) const { return help_.at(dotted); }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_, help_;
};

}  // namespace dro

#include "json_schema.hpp"

#include <fstream>

#include "fixtures.hpp"

using nlohmann::json;

namespace testing {

namespace {

bool has_type(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<long long>(v.get<double>()));
    if (t == "number") return v.is_number();
    return false;
}

void check(const json& s, const json& v, const std::string& path, std::vector<std::string>& errors) {
    if (auto it = s.find("type"); it != s.end()) {
        bool ok = false;
        if (it->is_string()) {
            ok = has_type(v, *it);
        } else {
            for (const auto& t : *it) ok = ok || has_type(v, t);
        }
        if (!ok) {
            errors.push_back(path + ": expected type " + it->dump() + ", got " + v.type_name());
            return;
        }
    }
    if (auto it = s.find("enum"); it != s.end()) {
        if (std::find(it->begin(), it->end(), v) == it->end()) errors.push_back(path + ": " + v.dump() + " not in enum");
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (auto it = s.find("minimum"); it != s.end() && x < it->get<double>()) errors.push_back(path + ": below minimum");
        if (auto it = s.find("maximum"); it != s.end() && x > it->get<double>()) errors.push_back(path + ": above maximum");
    }
    if (v.is_object()) {
        const json props = s.value("properties", json::object());
        for (const auto& key : s.value("required", json::array())) {
            if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing '" + key.get<std::string>() + "'");
        }
        const bool extra = s.value("additionalProperties", true);
        for (const auto& [key, sub] : v.items()) {
            if (props.contains(key)) {
                check(props[key], sub, path + "." + key, errors);
            } else if (!extra) {
                errors.push_back(path + ": unexpected '" + key + "'");
            }
        }
    }
    if (v.is_array()) {
        if (auto it = s.find("minItems"); it != s.end() && v.size() < it->get<std::size_t>()) errors.push_back(path + ": too few items");
        if (auto it = s.find("maxItems"); it != s.end() && v.size() > it->get<std::size_t>()) errors.push_back(path + ": too many items");
        if (auto it = s.find("items"); it != s.end()) {
            for (std::size_t i = 0; i < v.size(); ++i) check(*it, v[i], path + "[" + std::to_string(i) + "]", errors);
        }
    }
}

}  // namespace

std::vector<std::string> schema_errors(const json& schema, const json& value) {
    std::vector<std::string> errors;
    check(schema, value, "$", errors);
    return errors;
}

json load_schema(const std::string& name) {
    std::ifstream in(source_dir() / "schemas" / (name + ".schema.json"));
    if (!in) throw std::runtime_error("missing schema " + name);
    return json::parse(in);
}

}  // namespace testing

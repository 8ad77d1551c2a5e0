#include <algorithm>
#include <set>

#include "guide/error.hpp"
#include "guide/perception.hpp"
#include "guide/text.hpp"

namespace guide::perception {

std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::button: return "button";
    case ElementKind::text_field: return "text_field";
    case ElementKind::menu: return "menu";
    case ElementKind::icon: return "icon";
    case ElementKind::other: return "other";
  }
  return "other";
}

ElementKind element_kind_from_string(std::string_view s) {
  std::string k = text::to_lower(text::trim(s));
  std::replace(k.begin(), k.end(), ' ', '_');
  std::replace(k.begin(), k.end(), '-', '_');
  if (k == "button") return ElementKind::button;
  if (k == "text_field" || k == "textfield" || k == "input" || k == "textbox" || k == "text_box" || k == "entry") {
    return ElementKind::text_field;
  }
  if (k == "menu" || k == "menu_item" || k == "menuitem" || k == "dropdown") return ElementKind::menu;
  if (k == "icon") return ElementKind::icon;
  return ElementKind::other;
}

namespace {

const nlohmann::json* field(const nlohmann::json& obj, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = obj.find(n);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

void warn(WarningSink* sink, const std::string& code, const std::string& msg, const FrameRef& frame) {
  if (sink) sink->add(code, msg, frame.image.path);
}

}  // namespace

ElementGraph parse_element_graph(std::string_view raw, const FrameRef& frame, WarningSink* warnings) {
  nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::MalformedGraph, "element graph is not valid JSON");
  const nlohmann::json* list = nullptr;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object() && doc.contains("elements") && doc["elements"].is_array()) {
    list = &doc["elements"];
  } else {
    throw Error(ErrorKind::MalformedGraph, "element graph must be an array or an object with an elements array");
  }

  ElementGraph g;
  g.frame = frame;
  std::set<std::string> seen;
  std::size_t position = 0;
  for (const auto& e : *list) {
    std::size_t pos = position++;
    if (!e.is_object()) {
      warn(warnings, "element_dropped", "element " + std::to_string(pos) + " is not an object", frame);
      continue;
    }
    const auto* box = field(e, {"bbox", "box"});
    bool box_ok = box && box->is_array() && box->size() == 4 &&
                  std::all_of(box->begin(), box->end(), [](const nlohmann::json& v) { return v.is_number(); });
    if (!box_ok) {
      warn(warnings, "element_dropped", "element " + std::to_string(pos) + " has no usable bbox", frame);
      continue;
    }
    UIElement el;
    double raw_box[4] = {(*box)[0].get<double>(), (*box)[1].get<double>(), (*box)[2].get<double>(),
                         (*box)[3].get<double>()};
    bool clamped = false;
    for (double& v : raw_box) {
      double c = std::clamp(v, 0.0, 1.0);
      if (c != v) clamped = true;
      v = c;
    }
    el.bbox = {raw_box[0], raw_box[1], raw_box[2], raw_box[3]};
    if (clamped) warn(warnings, "bbox_clamped", "element " + std::to_string(pos) + " bbox clamped to [0,1]", frame);
    if (!(el.bbox.x0 < el.bbox.x1 && el.bbox.y0 < el.bbox.y1)) {
      warn(warnings, "element_dropped", "element " + std::to_string(pos) + " has a degenerate bbox", frame);
      continue;
    }

    if (const auto* id = field(e, {"id", "element_id"})) {
      el.element_id = id->is_string() ? id->get<std::string>() : id->dump();
    }
    if (el.element_id.empty()) el.element_id = "e" + std::to_string(pos);
    if (seen.count(el.element_id)) {
      std::string base = el.element_id;
      int n = 2;
      while (seen.count(base + "#" + std::to_string(n))) ++n;
      el.element_id = base + "#" + std::to_string(n);
      warn(warnings, "duplicate_id", "element id '" + base + "' re-keyed to '" + el.element_id + "'", frame);
    }
    seen.insert(el.element_id);

    if (const auto* k = field(e, {"type", "kind"}); k && k->is_string()) el.kind = element_kind_from_string(k->get<std::string>());
    if (const auto* t = field(e, {"text", "content", "text_label", "label"}); t && t->is_string()) {
      el.text_label = t->get<std::string>();
    }
    if (const auto* i = field(e, {"interactivity", "interactive"}); i && i->is_boolean()) el.interactive = i->get<bool>();
    g.elements.push_back(std::move(el));
  }
  return g;
}

nlohmann::json serialize_elements(const ElementGraph& g) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : g.elements) {
    list.push_back({{"id", e.element_id},
                    {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1}},
                    {"type", to_string(e.kind)},
                    {"text", e.text_label},
                    {"interactivity", e.interactive}});
  }
  return {{"elements", list}};
}

std::string serialize_element_graph(const ElementGraph& g) { return serialize_elements(g).dump(); }

}  // namespace guide::perception

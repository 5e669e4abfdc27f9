#include "webgym/dom.hpp"

namespace webgym {

void DomNode::set_attr(const std::string& key, const std::string& value) {
    for (auto& [k, v] : attributes) {
        if (k == key) {
            v = value;
            return;
        }
    }
    attributes.emplace_back(key, value);
}

const std::string* DomNode::attr(const std::string& key) const {
    for (const auto& [k, v] : attributes)
        if (k == key) return &v;
    return nullptr;
}

int assign_element_ids(DomNode& root, int first_id) {
    root.element_id = first_id++;
    for (auto& child : root.children) first_id = assign_element_ids(child, first_id);
    return first_id;
}

static void render_node(const DomNode& node, std::string& out) {
    out += '<';
    out += node.tag;
    for (const auto& [k, v] : node.attributes) {
        out += ' ';
        out += k;
        out += "=\"";
        out += v;
        out += '"';
    }
    out += " id=\"";
    out += std::to_string(node.element_id);
    out += '"';
    if (node.text_content.empty() && node.children.empty()) {
        out += "/>";
        return;
    }
    out += '>';
    if (!node.text_content.empty()) out += node.text_content;
    for (const auto& child : node.children) {
        out += ' ';
        render_node(child, out);
    }
    out += "</";
    out += node.tag;
    out += '>';
}

std::string render_dom(const DomNode& root) {
    std::string out;
    out.reserve(512);
    render_node(root, out);
    return out;
}

DomNode* find_by_id(DomNode& root, int element_id) {
    if (root.element_id == element_id) return &root;
    for (auto& child : root.children)
        if (DomNode* hit = find_by_id(child, element_id)) return hit;
    return nullptr;
}

const DomNode* find_by_id(const DomNode& root, int element_id) {
    return find_by_id(const_cast<DomNode&>(root), element_id);
}

} // namespace webgym

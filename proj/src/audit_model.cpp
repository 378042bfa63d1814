#include "tbhunt/audit_model.hpp"

#include <algorithm>
#include <array>

namespace tbhunt {

std::string_view to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::File: return "file";
        case EntityKind::Process: return "process";
        case EntityKind::NetworkConnection: return "network";
    }
    return "?";
}

std::string value_to_string(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return std::get<std::string>(v);
}

std::optional<Value> SystemEntity::attribute(std::string_view name) const {
    if (const auto* f = file()) {
        if (name == "name") return f->name;
        if (name == "path") return f->path;
        if (name == "user") return f->user;
        if (name == "group") return f->group;
    } else if (const auto* p = process()) {
        if (name == "pid") return p->pid;
        if (name == "exename") return p->exename;
        if (name == "user") return p->user;
        if (name == "group") return p->group;
        if (name == "cmd") return p->cmd;
    } else if (const auto* n = network()) {
        if (name == "srcip") return n->srcip;
        if (name == "srcport") return n->srcport;
        if (name == "dstip") return n->dstip;
        if (name == "dstport") return n->dstport;
        if (name == "protocol") return n->protocol;
    }
    return std::nullopt;
}

std::string basename_of(std::string_view path) {
    auto pos = path.find_last_of("/\\");
    if (pos == std::string_view::npos) return std::string(path);
    return std::string(path.substr(pos + 1));
}

SystemEntity make_file(std::string path, std::string user, std::string group) {
    SystemEntity e;
    FileAttributes f;
    f.name = basename_of(path);
    f.path = std::move(path);
    f.user = std::move(user);
    f.group = std::move(group);
    e.attributes = std::move(f);
    return e;
}

SystemEntity make_process(std::string exename, std::int64_t pid, std::string user, std::string group,
                          std::string cmd) {
    SystemEntity e;
    e.attributes = ProcessAttributes{pid, std::move(exename), std::move(user), std::move(group), std::move(cmd)};
    return e;
}

SystemEntity make_network(std::string srcip, std::int64_t srcport, std::string dstip, std::int64_t dstport,
                          std::string protocol) {
    SystemEntity e;
    e.attributes = NetworkAttributes{std::move(srcip), srcport, std::move(dstip), dstport, std::move(protocol)};
    return e;
}

const std::vector<std::string_view>& attribute_names(EntityKind kind) {
    static const std::vector<std::string_view> file{"name", "path", "user", "group"};
    static const std::vector<std::string_view> proc{"pid", "exename", "user", "group", "cmd"};
    static const std::vector<std::string_view> net{"srcip", "srcport", "dstip", "dstport", "protocol"};
    switch (kind) {
        case EntityKind::File: return file;
        case EntityKind::Process: return proc;
        case EntityKind::NetworkConnection: return net;
    }
    return file;
}

bool has_attribute(EntityKind kind, std::string_view name) {
    const auto& names = attribute_names(kind);
    return std::find(names.begin(), names.end(), name) != names.end();
}

bool is_numeric_attribute(std::string_view name) {
    return name == "pid" || name == "srcport" || name == "dstport" || name == "starttime" ||
           name == "endtime" || name == "amount" || name == "failurecode" || name == "id";
}

std::string_view default_attribute(EntityKind kind) {
    switch (kind) {
        case EntityKind::File: return "name";
        case EntityKind::Process: return "exename";
        case EntityKind::NetworkConnection: return "dstip";
    }
    return "name";
}

std::string canonical_identifier(const SystemEntity& entity) {
    auto missing = [](std::string_view field) {
        return ValidationError("entity is missing required attribute '" + std::string(field) + "'");
    };
    if (const auto* p = entity.process()) {
        if (p->exename.empty()) throw missing("exename");
        if (p->pid < 0) throw missing("pid");
        return "proc:" + p->exename + ":" + std::to_string(p->pid);
    }
    if (const auto* f = entity.file()) {
        if (f->path.empty()) throw missing("path");
        return "file:" + f->path;
    }
    const auto& n = *entity.network();
    if (n.srcip.empty()) throw missing("srcip");
    if (n.srcport < 0) throw missing("srcport");
    if (n.dstip.empty()) throw missing("dstip");
    if (n.dstport < 0) throw missing("dstport");
    if (n.protocol.empty()) throw missing("protocol");
    return "net:" + n.srcip + ":" + std::to_string(n.srcport) + ":" + n.dstip + ":" +
           std::to_string(n.dstport) + ":" + n.protocol;
}

std::string_view to_string(OperationType op) {
    switch (op) {
        case OperationType::Read: return "read";
        case OperationType::Write: return "write";
        case OperationType::Execute: return "execute";
        case OperationType::Start: return "start";
        case OperationType::End: return "end";
        case OperationType::Rename: return "rename";
    }
    return "?";
}

std::optional<OperationType> parse_operation(std::string_view text) {
    for (auto op : kAllOperations)
        if (to_string(op) == text) return op;
    return std::nullopt;
}

std::string_view to_string(EventCategory c) {
    switch (c) {
        case EventCategory::ProcessToFile: return "ProcessToFile";
        case EventCategory::ProcessToProcess: return "ProcessToProcess";
        case EventCategory::ProcessToNetwork: return "ProcessToNetwork";
    }
    return "?";
}

EventCategory category_for(EntityKind objectKind) {
    switch (objectKind) {
        case EntityKind::File: return EventCategory::ProcessToFile;
        case EntityKind::Process: return EventCategory::ProcessToProcess;
        case EntityKind::NetworkConnection: return EventCategory::ProcessToNetwork;
    }
    return EventCategory::ProcessToFile;
}

const std::vector<std::string_view>& event_attribute_names() {
    static const std::vector<std::string_view> names{"id", "optype", "starttime", "endtime", "amount",
                                                     "failurecode"};
    return names;
}

bool is_event_attribute(std::string_view name) {
    const auto& names = event_attribute_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::optional<Value> event_attribute(const SystemEvent& e, std::string_view name) {
    if (name == "id") return static_cast<std::int64_t>(to_underlying(e.id));
    if (name == "optype") return std::string(to_string(e.operation));
    if (name == "starttime") return e.startTime;
    if (name == "endtime") return e.endTime;
    if (name == "amount") return e.dataAmount;
    if (name == "failurecode") return e.failureCode;
    return std::nullopt;
}

std::optional<SyscallClass> classify_syscall(std::string_view syscall, EntityKind objectKind) {
    struct Row {
        std::string_view syscall;
        EntityKind kind;
        OperationType op;
    };
    // Monitored syscall x object kind pairs; anything else is not monitored.
    static constexpr std::array<Row, 18> table{{
        {"read", EntityKind::File, OperationType::Read},
        {"readv", EntityKind::File, OperationType::Read},
        {"write", EntityKind::File, OperationType::Write},
        {"writev", EntityKind::File, OperationType::Write},
        {"execve", EntityKind::File, OperationType::Execute},
        {"rename", EntityKind::File, OperationType::Rename},
        {"execve", EntityKind::Process, OperationType::Start},
        {"fork", EntityKind::Process, OperationType::Start},
        {"clone", EntityKind::Process, OperationType::Start},
        {"exit", EntityKind::Process, OperationType::End},
        {"exit_group", EntityKind::Process, OperationType::End},
        {"read", EntityKind::NetworkConnection, OperationType::Read},
        {"readv", EntityKind::NetworkConnection, OperationType::Read},
        {"recvfrom", EntityKind::NetworkConnection, OperationType::Read},
        {"recvmsg", EntityKind::NetworkConnection, OperationType::Read},
        {"sendto", EntityKind::NetworkConnection, OperationType::Write},
        {"write", EntityKind::NetworkConnection, OperationType::Write},
        {"writev", EntityKind::NetworkConnection, OperationType::Write},
    }};
    for (const auto& row : table) {
        if (row.syscall == syscall && row.kind == objectKind)
            return SyscallClass{category_for(objectKind), row.op};
    }
    return std::nullopt;
}

}  // namespace tbhunt

#include <cstring>
#include <fstream>
#include <iterator>

#include "tbhunt/event_store.hpp"
#include "tbhunt/ingestion.hpp"

namespace tbhunt {

namespace {

constexpr char kMagic[4] = {'T', 'B', 'H', 'S'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }

    void need(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n) throw LoadError(std::string("truncated while reading ") + what, pos_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    std::int64_t i64(const char* what) { return static_cast<std::int64_t>(u64(what)); }
    std::string str(const char* what) {
        const auto n = u32(what);
        need(n, what);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const StoreSnapshot& snapshot) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kSnapshotVersion);
    w.u64(snapshot.entity_count());
    for (const auto& e : snapshot.entities()) {
        w.u32(to_underlying(e.uid));
        w.u8(static_cast<std::uint8_t>(e.kind()));
        if (const auto* f = e.file()) {
            w.str(f->name);
            w.str(f->path);
            w.str(f->user);
            w.str(f->group);
        } else if (const auto* p = e.process()) {
            w.i64(p->pid);
            w.str(p->exename);
            w.str(p->user);
            w.str(p->group);
            w.str(p->cmd);
        } else {
            const auto& n = *e.network();
            w.str(n.srcip);
            w.i64(n.srcport);
            w.str(n.dstip);
            w.i64(n.dstport);
            w.str(n.protocol);
        }
    }
    w.u64(snapshot.event_count());
    for (const auto& ev : snapshot.events()) {
        w.u64(to_underlying(ev.id));
        w.u32(to_underlying(ev.subject));
        w.u32(to_underlying(ev.object));
        w.u8(static_cast<std::uint8_t>(ev.category));
        w.u8(static_cast<std::uint8_t>(ev.operation));
        w.i64(ev.startTime);
        w.i64(ev.endTime);
        w.i64(ev.dataAmount);
        w.i64(ev.failureCode);
    }
    return w.take();
}

StoreSnapshot deserialize(std::string_view bytes) {
    Reader r(bytes);
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError("bad magic (not a snapshot file)", 0);
    for (int i = 0; i < 4; ++i) r.u8("magic");
    const auto versionAt = r.offset();
    const auto version = r.u32("version");
    if (version != kSnapshotVersion)
        throw LoadError("unsupported snapshot version " + std::to_string(version) + " (expected " +
                            std::to_string(kSnapshotVersion) + ")",
                        versionAt);

    const auto nEntities = r.u64("entity count");
    // Every entity occupies at least 5 bytes, which bounds a corrupt count.
    if (nEntities > bytes.size()) throw LoadError("entity count exceeds file size", r.offset() - 8);
    std::vector<SystemEntity> entities;
    entities.reserve(nEntities);
    for (std::uint64_t i = 0; i < nEntities; ++i) {
        SystemEntity e;
        e.uid = EntityUid{r.u32("entity uid")};
        const auto kindAt = r.offset();
        const auto kind = r.u8("entity kind");
        if (kind == static_cast<std::uint8_t>(EntityKind::File)) {
            FileAttributes f;
            f.name = r.str("file name");
            f.path = r.str("file path");
            f.user = r.str("file user");
            f.group = r.str("file group");
            e.attributes = std::move(f);
        } else if (kind == static_cast<std::uint8_t>(EntityKind::Process)) {
            ProcessAttributes p;
            p.pid = r.i64("pid");
            p.exename = r.str("exename");
            p.user = r.str("process user");
            p.group = r.str("process group");
            p.cmd = r.str("cmd");
            e.attributes = std::move(p);
        } else if (kind == static_cast<std::uint8_t>(EntityKind::NetworkConnection)) {
            NetworkAttributes n;
            n.srcip = r.str("srcip");
            n.srcport = r.i64("srcport");
            n.dstip = r.str("dstip");
            n.dstport = r.i64("dstport");
            n.protocol = r.str("protocol");
            e.attributes = std::move(n);
        } else {
            throw LoadError("invalid entity kind " + std::to_string(kind), kindAt);
        }
        entities.push_back(std::move(e));
    }

    const auto nEvents = r.u64("event count");
    if (nEvents > bytes.size()) throw LoadError("event count exceeds file size", r.offset() - 8);
    std::vector<SystemEvent> events;
    events.reserve(nEvents);
    for (std::uint64_t i = 0; i < nEvents; ++i) {
        SystemEvent ev;
        ev.id = EventId{r.u64("event id")};
        ev.subject = EntityUid{r.u32("subject uid")};
        ev.object = EntityUid{r.u32("object uid")};
        const auto catAt = r.offset();
        const auto cat = r.u8("category");
        const auto op = r.u8("operation");
        if (cat > 2 || op > 5) throw LoadError("invalid event category/operation", catAt);
        ev.category = static_cast<EventCategory>(cat);
        ev.operation = static_cast<OperationType>(op);
        ev.startTime = r.i64("start time");
        ev.endTime = r.i64("end time");
        ev.dataAmount = r.i64("data amount");
        ev.failureCode = r.i64("failure code");
        events.push_back(ev);
    }
    if (!r.done()) throw LoadError("trailing bytes after event table", r.offset());
    try {
        return StoreSnapshot::load(std::move(entities), std::move(events));
    } catch (const IntegrityError& e) {
        throw LoadError(e.what(), r.offset());
    }
}

void persist(const StoreSnapshot& snapshot, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot '" + file.string() + "'");
    const auto bytes = serialize(snapshot);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing snapshot '" + file.string() + "'");
}

StoreSnapshot restore(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open snapshot '" + file.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace tbhunt

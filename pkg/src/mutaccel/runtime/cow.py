"""Copy-on-write storage shared between forked machine states.

Memory cells and simulated file contents live in pages held by a single
refcounted :class:`PageStore`.  A state owns only a page table (list of page
ids); forking copies the table and bumps refcounts, and a write to a page whose
refcount is above one copies it first.
"""

from __future__ import annotations

MEMORY_PAGE = 64  # cells
FILE_PAGE = 64  # bytes
OUTPUT_CHUNK = 256  # bytes


class FsError(Exception):
    """Raised for bad handles and negative seeks; the interpreter turns it into a trap."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class PageStore:
    """Refcounted page pool.  ``copies`` counts copy-on-write page duplications."""

    def __init__(self):
        self.pages: dict[int, list | bytearray] = {}
        self.refs: dict[int, int] = {}
        self.copies = 0
        self._next = 0

    def new(self, data) -> int:
        pid = self._next
        self._next += 1
        self.pages[pid] = data
        self.refs[pid] = 1
        return pid

    def incref(self, pid: int) -> None:
        self.refs[pid] += 1

    def decref(self, pid: int) -> None:
        n = self.refs[pid] - 1
        if n:
            self.refs[pid] = n
        else:
            del self.refs[pid]
            del self.pages[pid]

    def writable(self, pid: int) -> int:
        """Return a page id safe to mutate in place, copying ``pid`` if it is shared."""
        if self.refs[pid] == 1:
            return pid
        self.copies += 1
        self.refs[pid] -= 1
        return self.new(self.pages[pid].copy())

    def live_pages(self) -> int:
        return len(self.pages)


class PagedMemory:
    __slots__ = ("store", "size", "table")

    def __init__(self, store: PageStore, size: int, table: list[int] | None = None):
        self.store = store
        self.size = size
        if table is None:
            npages = -(-size // MEMORY_PAGE)
            table = [store.new([0] * MEMORY_PAGE) for _ in range(npages)]
        self.table = table

    def read(self, addr: int) -> int:
        return self.store.pages[self.table[addr // MEMORY_PAGE]][addr % MEMORY_PAGE]

    def write(self, addr: int, value: int) -> None:
        i = addr // MEMORY_PAGE
        pid = self.store.writable(self.table[i])
        self.table[i] = pid
        self.store.pages[pid][addr % MEMORY_PAGE] = value

    def fork(self) -> PagedMemory:
        for pid in self.table:
            self.store.incref(pid)
        return PagedMemory(self.store, self.size, list(self.table))

    def release(self) -> None:
        for pid in self.table:
            self.store.decref(pid)
        self.table = []

    def cells(self) -> tuple[int, ...]:
        out: list[int] = []
        for pid in self.table:
            out.extend(self.store.pages[pid])
        return tuple(out[: self.size])


class OutputStream:
    """Append-only byte stream; full chunks are immutable ``bytes`` shared across forks."""

    __slots__ = ("chunks", "tail")

    def __init__(self, chunks: list[bytes] | None = None, tail: bytes = b""):
        self.chunks = chunks if chunks is not None else []
        self.tail = tail

    def append(self, data: bytes) -> None:
        tail = self.tail + data
        if len(tail) >= OUTPUT_CHUNK:
            self.chunks.append(tail)
            tail = b""
        self.tail = tail

    def fork(self) -> OutputStream:
        return OutputStream(list(self.chunks), self.tail)

    def getvalue(self) -> bytes:
        return b"".join(self.chunks) + self.tail


class SimFile:
    __slots__ = ("pages", "size")

    def __init__(self, pages: list[int], size: int):
        self.pages = pages
        self.size = size


class SimFS:
    """Paged in-memory file system keyed by integer file id."""

    __slots__ = ("store", "files", "handles", "next_handle")

    def __init__(self, store: PageStore, files=None, handles=None, next_handle: int = 3):
        self.store = store
        self.files: dict[int, SimFile] = files if files is not None else {}
        self.handles: dict[int, list[int]] = handles if handles is not None else {}  # h -> [fid, cursor]
        self.next_handle = next_handle

    @classmethod
    def preload(cls, store: PageStore, contents: dict[int, bytes]) -> SimFS:
        fs = cls(store)
        for fid in sorted(contents):
            data = contents[fid]
            pages = []
            for off in range(0, len(data), FILE_PAGE):
                page = bytearray(FILE_PAGE)
                chunk = data[off : off + FILE_PAGE]
                page[: len(chunk)] = chunk
                pages.append(store.new(page))
            fs.files[fid] = SimFile(pages, len(data))
        return fs

    def fork(self) -> SimFS:
        files = {}
        for fid, f in self.files.items():
            for pid in f.pages:
                self.store.incref(pid)
            files[fid] = SimFile(list(f.pages), f.size)
        handles = {h: list(v) for h, v in self.handles.items()}
        return SimFS(self.store, files, handles, self.next_handle)

    def release(self) -> None:
        for f in self.files.values():
            for pid in f.pages:
                self.store.decref(pid)
        self.files = {}

    def _handle(self, handle: int) -> list[int]:
        try:
            return self.handles[handle]
        except KeyError:
            raise FsError("bad-handle") from None

    def open(self, fid: int) -> int:
        if fid not in self.files:
            self.files[fid] = SimFile([], 0)
        h = self.next_handle
        self.next_handle += 1
        self.handles[h] = [fid, 0]
        return h

    def read(self, handle: int, n: int) -> bytes:
        entry = self._handle(handle)
        f = self.files[entry[0]]
        start = entry[1]
        end = min(f.size, start + max(n, 0))
        out = bytearray()
        pos = start
        while pos < end:
            page = self.store.pages[f.pages[pos // FILE_PAGE]]
            off = pos % FILE_PAGE
            take = min(end - pos, FILE_PAGE - off)
            out += page[off : off + take]
            pos += take
        entry[1] = max(start, end)
        return bytes(out)

    def write(self, handle: int, data: bytes) -> int:
        entry = self._handle(handle)
        f = self.files[entry[0]]
        pos = entry[1]
        end = pos + len(data)
        while len(f.pages) * FILE_PAGE < end:
            f.pages.append(self.store.new(bytearray(FILE_PAGE)))
        i = 0
        while pos < end:
            idx = pos // FILE_PAGE
            pid = self.store.writable(f.pages[idx])
            f.pages[idx] = pid
            off = pos % FILE_PAGE
            take = min(end - pos, FILE_PAGE - off)
            self.store.pages[pid][off : off + take] = data[i : i + take]
            pos += take
            i += take
        entry[1] = end
        f.size = max(f.size, end)
        return len(data)

    def seek(self, handle: int, offset: int) -> None:
        entry = self._handle(handle)
        if offset < 0:
            raise FsError("negative-seek")
        entry[1] = offset

    def contents(self, fid: int) -> bytes:
        f = self.files[fid]
        data = b"".join(bytes(self.store.pages[pid]) for pid in f.pages)
        return data[: f.size]

    def snapshot(self) -> tuple:
        files = tuple((fid, self.contents(fid)) for fid in sorted(self.files))
        handles = tuple((h, tuple(v)) for h, v in sorted(self.handles.items()))
        return files, handles, self.next_handle

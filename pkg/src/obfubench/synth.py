"""Synthetic labeled Java corpus and random Java-like fuzz sources.

The synthetic corpus gives each pattern label a minimal structural skeleton
(private constructor plus static accessor for Singleton, fluent nested
builder for Builder, and so on) and deliberately leaks the label through
class names and print strings, the way real pattern corpora do.
"""

from __future__ import annotations

import random
import re
from pathlib import Path
from typing import Callable

from obfubench.corpus import DEFAULT_LABELS, Corpus, CorpusEntry
from obfubench.errors import DataError

DOMAINS = [
    "Order", "Customer", "Invoice", "Report", "Session", "Payment", "Document",
    "Message", "Account", "Sensor", "Ticket", "Shape", "Catalog", "Printer",
    "Vehicle", "Weather", "Player", "Cache", "Network", "Inventory",
]  # fmt: skip
ATTRIBUTES = [
    "count", "total", "name", "status", "owner", "price", "limit", "retries",
    "weight", "level", "score", "timeout", "version", "region", "quota", "index",
]  # fmt: skip
ROLES = ["", "Impl", "Core", "Service", "Manager", "Support", "Main", "Base"]


def _camel(label: str) -> str:
    return "".join(part[:1].upper() + part[1:] for part in label.split())


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


class _Ctx:
    """Per-file jitter: domain noun, pattern prefix and a few extra members."""

    def __init__(self, rng: random.Random, label: str, domain: str, role: str):
        self.rng = rng
        self.label = label
        self.dom = domain
        self.pat = _camel(label)
        self.role = role
        self.attrs = rng.sample(ATTRIBUTES, rng.randint(1, 3))

    @property
    def main(self) -> str:
        return f"{self.dom}{self.pat}{self.role}"

    def lower(self, name: str) -> str:
        return name[:1].lower() + name[1:]

    def fields(self, indent: str = "    ") -> str:
        lines = []
        for a in self.attrs:
            kind = self.rng.choice(["int", "String", "long", "boolean"])
            init = {"int": str(self.rng.randint(0, 9)), "long": f"{self.rng.randint(10, 99)}L",
                    "String": f'"{a}"', "boolean": self.rng.choice(["true", "false"])}[kind]  # fmt: skip
            lines.append(f"{indent}private {kind} {a} = {init};")
        return "\n".join(lines)

    def helper(self, indent: str = "    ") -> str:
        """A small helper method with a loop; shape jitters per file."""
        a = self.attrs[0]
        n = self.rng.randint(2, 5)
        body = self.rng.choice(
            [
                f"for (int i = 0; i < {n}; i++) {{\n{indent}        result += i;\n{indent}    }}",
                f"while (result < {n}) {{\n{indent}        result++;\n{indent}    }}",
                f"if (result == 0) {{\n{indent}        result = {n};\n{indent}    }}",
            ]
        )
        return (
            f"{indent}int compute{_camel(a)}() {{\n"
            f"{indent}    int result = 0;\n"
            f"{indent}    {body}\n"
            f"{indent}    return result;\n"
            f"{indent}}}"
        )

    def say(self, what: str) -> str:
        return f'System.out.println("{self.label} {what} for {self.dom.lower()}");'


def _doc(ctx: _Ctx) -> str:
    return f"/**\n * {ctx.label} pattern: {ctx.dom} {ctx.pat} example.\n */\n"


def _singleton(c: _Ctx) -> str:
    lock = c.rng.choice(["lock", "mutex", "guard"])
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} {{
    private static {c.main} instance = null;
    private static final Object {lock} = new Object();
{c.fields()}

    private {c.main}() {{
        {c.say("instance created")}
    }}

    public static {c.main} getInstance() {{
        if (instance == null) {{
            synchronized ({lock}) {{
                if (instance == null) {{
                    instance = new {c.main}();
                }}
            }}
        }}
        return instance;
    }}

{c.helper()}
}}
"""


def _factory_method(c: _Ctx) -> str:
    prod = f"{c.dom}Product"
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public abstract class {c.main} {{
{c.fields()}

    // factory method: subclasses decide the concrete product
    protected abstract {prod} create{prod}();

    public void process() {{
        {prod} product = create{prod}();
        product.use();
        {c.say("created a product")}
    }}

    public interface {prod} {{
        void use();
    }}

    public static class Basic{c.dom}Creator extends {c.main} {{
        protected {prod} create{prod}() {{
            return new {prod}() {{
                public void use() {{
                    System.out.println("basic");
                }}
            }};
        }}
    }}

{c.helper()}
}}
"""


def _abstract_factory(c: _Ctx) -> str:
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public interface {c.main} {{
    {c.dom}Widget createWidget();
    {c.dom}Panel createPanel();

    class Light{c.pat} implements {c.main} {{
        public {c.dom}Widget createWidget() {{
            return new {c.dom}Widget("light");
        }}
        public {c.dom}Panel createPanel() {{
            System.out.println("{c.label} light family");
            return new {c.dom}Panel("light");
        }}
    }}

    class Dark{c.pat} implements {c.main} {{
        public {c.dom}Widget createWidget() {{
            return new {c.dom}Widget("dark");
        }}
        public {c.dom}Panel createPanel() {{
            return new {c.dom}Panel("dark");
        }}
    }}
}}
"""


def _builder(c: _Ctx) -> str:
    setters = "\n".join(
        f"""        public {c.pat} with{_camel(a)}(String {a}) {{
            this.{a} = {a};
            return this;
        }}"""
        for a in c.attrs
    )
    fields = "\n".join(f"        private String {a};" for a in c.attrs)
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} {{
    private final String summary;

    private {c.main}({c.pat} source) {{
        this.summary = source.toString();
    }}

    public static {c.pat} builder() {{
        return new {c.pat}();
    }}

    public static final class {c.pat} {{
{fields}

{setters}

        public {c.main} build() {{
            {c.say("assembled")}
            return new {c.main}(this);
        }}
    }}
}}
"""


def _prototype(c: _Ctx) -> str:
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} implements Cloneable {{
{c.fields()}
    private int[] values = new int[{c.rng.randint(2, 8)}];

    public {c.main}() {{
    }}

    protected {c.main}({c.main} other) {{
        this.values = other.values.clone();
    }}

    @Override
    public {c.main} clone() {{
        {c.say("copied")}
        return new {c.main}(this);
    }}

{c.helper()}
}}
"""


def _adapter(c: _Ctx) -> str:
    legacy = f"Legacy{c.dom}"
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} implements {c.dom}Target {{
    private final {legacy} adaptee;
{c.fields()}

    public {c.main}({legacy} adaptee) {{
        this.adaptee = adaptee;
    }}

    @Override
    public int request(int amount) {{
        {c.say("translating request")}
        return adaptee.specificRequest(amount * {c.rng.randint(2, 9)});
    }}

{c.helper()}
}}
"""


def _decorator(c: _Ctx) -> str:
    comp = f"{c.dom}Component"
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public abstract class {c.main} implements {comp} {{
    protected final {comp} wrapped;

    protected {c.main}({comp} wrapped) {{
        this.wrapped = wrapped;
    }}

    public String render() {{
        return wrapped.render();
    }}

    public static class Border{c.pat} extends {c.main} {{
        public Border{c.pat}({comp} inner) {{
            super(inner);
        }}

        @Override
        public String render() {{
            {c.say("adds a border")}
            return "[" + super.render() + "]";
        }}
    }}
}}
"""


def _facade(c: _Ctx) -> str:
    parts = c.rng.sample(["Loader", "Parser", "Validator", "Writer", "Indexer"], 3)
    fields = "\n".join(f"    private final {c.dom}{p} {c.lower(p)} = new {c.dom}{p}();" for p in parts)
    calls = "\n".join(f"        {c.lower(p)}.run();" for p in parts)
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} {{
{fields}

    public void perform() {{
        {c.say("coordinating subsystems")}
{calls}
    }}
}}
"""


def _proxy(c: _Ctx) -> str:
    real = f"Real{c.dom}Subject"
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} implements {c.dom}Subject {{
    private {real} real;
    private final String user;

    public {c.main}(String user) {{
        this.user = user;
    }}

    @Override
    public void request() {{
        if (user == null) {{
            throw new IllegalStateException("{c.label} denied access");
        }}
        if (real == null) {{
            real = new {real}();
        }}
        {c.say("forwarding")}
        real.request();
    }}
}}
"""


def _observer(c: _Ctx) -> str:
    listener = f"{c.dom}{c.pat}"
    return f"""package demo.{c.dom.lower()};

import java.util.ArrayList;
import java.util.List;

{_doc(c)}public class {c.dom}Subject{c.role} {{
    private final List<{listener}> observers = new ArrayList<>();
{c.fields()}

    public void attach({listener} o) {{
        observers.add(o);
    }}

    public void detach({listener} o) {{
        observers.remove(o);
    }}

    public void notifyAllObservers(String event) {{
        for ({listener} o : observers) {{
            o.update(event);
        }}
        {c.say("notified")}
    }}

    public interface {listener} {{
        void update(String event);
    }}
}}
"""


def _strategy(c: _Ctx) -> str:
    iface = f"{c.dom}{c.pat}"
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.dom}Context{c.role} {{
    private {iface} strategy;
{c.fields()}

    public void setStrategy({iface} strategy) {{
        this.strategy = strategy;
    }}

    public int execute(int a, int b) {{
        {c.say("executing")}
        return strategy.apply(a, b);
    }}

    public interface {iface} {{
        int apply(int a, int b);
    }}

    public static final {iface} ADD_{c.pat.upper()} = (a, b) -> a + b;
    public static final {iface} MAX_{c.pat.upper()} = (a, b) -> a > b ? a : b;
}}
"""


def _template_method(c: _Ctx) -> str:
    steps = c.rng.sample(["open", "read", "transform", "validate", "close"], 3)
    abstract = "\n".join(f"    protected abstract void {s}{c.dom}();" for s in steps)
    calls = "\n".join(f"        {s}{c.dom}();" for s in steps)
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public abstract class {c.main} {{
{c.fields()}

    // the template method fixes the order of the steps
    public final void run{c.pat}() {{
        {c.say("starting")}
{calls}
    }}

{abstract}
}}
"""


def _visitor(c: _Ctx) -> str:
    elems = c.rng.sample(["Circle", "Square", "Line", "Node", "Leaf"], 2)
    visits = "\n".join(f"    void visit({c.dom}{e} element);" for e in elems)
    classes = "\n".join(
        f"""    class {c.dom}{e} {{
        public void accept({c.main} visitor) {{
            visitor.visit(this);
        }}
    }}"""
        for e in elems
    )
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public interface {c.main} {{
{visits}

{classes}
}}
// {c.label} double dispatch
"""


def _unknown(c: _Ctx) -> str:
    return f"""package demo.{c.dom.lower()};

{_doc(c)}public class {c.main} {{
{c.fields()}

    public static int sum(int[] data) {{
        int total = 0;
        for (int d : data) {{
            total += d;
        }}
        return total;
    }}

{c.helper()}

    public String describe() {{
        return "{c.label} utility for {c.dom.lower()}";
    }}
}}
"""


TEMPLATES: dict[str, Callable[[_Ctx], str]] = {
    "Singleton": _singleton,
    "Factory Method": _factory_method,
    "Abstract Factory": _abstract_factory,
    "Builder": _builder,
    "Prototype": _prototype,
    "Adapter": _adapter,
    "Decorator": _decorator,
    "Facade": _facade,
    "Proxy": _proxy,
    "Observer": _observer,
    "Strategy": _strategy,
    "Template Method": _template_method,
    "Visitor": _visitor,
    "Unknown": _unknown,
}


def synthesize(per_label: int, seed: int) -> Corpus:
    """Build the synthetic corpus in memory: ``per_label`` files for each of the 14 labels."""
    if per_label < 2:
        raise DataError("per_label must be >= 2")
    rng = random.Random(seed)
    entries = []
    for label in DEFAULT_LABELS:
        used: set[str] = set()
        combos = [(d, r) for d in DOMAINS for r in ROLES]
        rng.shuffle(combos)
        for i in range(per_label):
            domain, role = combos[i % len(combos)]
            ctx = _Ctx(rng, label, domain, role)
            name = ctx.main
            if name in used:
                name = f"{name}{i}"
            used.add(name)
            text = TEMPLATES[label](ctx)
            path = f"{_slug(label)}/{name}.java"
            entries.append(CorpusEntry(path, path, text.encode("utf-8"), label))
    entries.sort(key=lambda e: e.id)
    return Corpus(tuple(entries), DEFAULT_LABELS)


def generate_synthetic_corpus(per_label: int, seed: int, out: str | Path) -> tuple[Corpus, Path]:
    """Write the synthetic corpus and its ``manifest.csv`` under ``out``."""
    corpus = synthesize(per_label, seed)
    manifest = corpus.write(out)
    return Corpus(corpus.entries, corpus.label_set, Path(out)), manifest


# ---------------------------------------------------------------------------
# fuzz sources

_WORDS = ["alpha", "beta", "node", "item", "value", "count", "data", "list", "map", "key",
          "buffer", "state", "event", "handler", "result", "index", "size", "flag"]  # fmt: skip
_UNICODE_WORDS = ["größe", "число", "café", "λambda"]
_ESCAPES = ["\\n", "\\t", '\\"', "\\\\", "\\u0041", "\\'", "\\0"]
_NUMBERS = ["0", "42", "0x1F", "0b1010", "1_000_000", "3.14", "1e-9", "2.5f", "10L", ".5", "0x1.8p3", "077"]


class _Fuzz:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.names: list[str] = []

    def ident(self, upper: bool = False) -> str:
        r = self.rng
        if r.random() < 0.05:
            word = r.choice(_UNICODE_WORDS)
        else:
            word = r.choice(_WORDS) + "".join(w.title() for w in r.sample(_WORDS, r.randint(0, 2)))
        if r.random() < 0.1:
            word += str(r.randint(0, 99))
        if r.random() < 0.05:
            word = "_" + word
        return word[:1].upper() + word[1:] if upper else word

    def string(self) -> str:
        r = self.rng
        parts = [r.choice(_WORDS + [" ", "Hello world", "a;b{c}", "// not a comment", "/* nor this */"])]
        parts += [r.choice(_ESCAPES) for _ in range(r.randint(0, 2))]
        r.shuffle(parts)
        return '"' + "".join(parts) + '"'

    def expr(self, depth: int = 0) -> str:
        r = self.rng
        names = self.names or ["x"]
        choices = [
            lambda: r.choice(names),
            lambda: r.choice(_NUMBERS),
            lambda: self.string(),
            lambda: "'" + r.choice(["a", "\\n", "\\u0041", "'", "\\\\"]).replace("'", "\\'") + "'",
            lambda: f"{r.choice(names)}.{self.ident()}({r.choice(names)})",
            lambda: "true" if r.random() < 0.5 else "null",
        ]
        if depth < 2:
            choices += [
                lambda: f"({self.expr(depth + 1)} {r.choice(['+', '-', '*', '==', '<', '>>>', '&&', '? 1 :'])} {self.expr(depth + 1)})",
                lambda: f"new {self.ident(True)}<{self.ident(True)}>({self.expr(depth + 1)})",
                lambda: f"{r.choice(names)} -> {self.expr(depth + 1)}",
            ]
        return r.choice(choices)()

    def trivia(self) -> str:
        r = self.rng
        roll = r.random()
        if roll < 0.1:
            return f" // {r.choice(_WORDS)} {r.choice(['TODO', 'x < y', '/* inner', 'ünïcode'])}\n"
        if roll < 0.18:
            return f" /* {r.choice(_WORDS)}\n * {r.choice(_WORDS)} */ "
        return r.choice([" ", "\n", "\t", "\r\n", "  "])

    def statement(self, indent: str) -> str:
        r = self.rng
        roll = r.random()
        if roll < 0.35:
            name = self.ident()
            self.names.append(name)
            typ = r.choice(["int", "String", "long[]", f"List<{self.ident(True)}>", self.ident(True), "var"])
            return f"{indent}{typ} {name} = {self.expr()};"
        if roll < 0.5:
            return f"{indent}if ({self.expr()}) {{{self.trivia()}{indent}    {r.choice(self.names or ['x'])} = {self.expr()};\n{indent}}}"
        if roll < 0.6:
            i = self.ident()
            return f"{indent}for (int {i} = 0; {i} < {r.choice(_NUMBERS[:3])}; {i}++) {{ {self.expr()}; }}"
        if roll < 0.7:
            return f'{indent}System.out.println({self.string()});'
        if roll < 0.75:
            return f'{indent}String block = """\n{indent}    {r.choice(_WORDS)} "quoted" \\n\n{indent}    """;'
        if roll < 0.85:
            return f"{indent}try {{ {self.expr()}; }} catch ({self.ident(True)}Exception {self.ident()}) {{ }}"
        return f"{indent}return {self.expr()};"

    def program(self) -> str:
        r = self.rng
        cls = self.ident(True)
        out = [f"package {self.ident()}.{self.ident()};\n", "import java.util.List;\n"]
        if r.random() < 0.5:
            out.append(f"import static java.lang.Math.{r.choice(['max', 'min', 'abs'])};\n")
        out.append(self.trivia())
        generic = f"<{self.ident(True)}>" if r.random() < 0.3 else ""
        out.append(f"@SuppressWarnings(\"unchecked\")\npublic {r.choice(['class', 'final class', 'abstract class'])} {cls}{generic} {{\n")
        for _ in range(r.randint(0, 3)):
            name = self.ident()
            self.names.append(name)
            out.append(f"    private {r.choice(['int', 'String', 'Object', cls])} {name};{self.trivia()}\n")
        for _ in range(r.randint(1, 4)):
            params = [f"{r.choice(['int', 'String', cls])} {self.ident()}" for _ in range(r.randint(0, 3))]
            self.names.extend(p.split()[-1] for p in params)
            out.append(f"    public {r.choice(['void', 'int', 'String', cls])} {self.ident()}({', '.join(params)}) {{\n")
            for _ in range(r.randint(1, 6)):
                out.append(self.statement("        ") + self.trivia() + "\n")
            out.append("    }\n")
        if r.random() < 0.3:
            out.append(f"    enum {self.ident(True)} {{ {', '.join(self.ident().upper() for _ in range(3))} }}\n")
        out.append("}\n")
        if r.random() < 0.3:
            out.append("// trailing comment without newline")
        return "".join(out)


def fuzz_java(seed: int) -> str:
    """One random, lexically valid Java-like source file (not necessarily compilable)."""
    return _Fuzz(random.Random(seed)).program()


def fuzz_corpus(n: int, seed: int) -> Corpus:
    entries = []
    for i in range(n):
        path = f"fuzz/F{i:03d}.java"
        entries.append(CorpusEntry(path, path, fuzz_java(seed * 100_003 + i).encode("utf-8"), "Unknown"))
    return Corpus(tuple(entries), DEFAULT_LABELS)

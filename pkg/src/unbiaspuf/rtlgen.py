"""Verilog generator for the strong UNBIAS PUF, plus a small structural lint.

Layout of the generated top module, per chain (A and B)::

    trigger -> gate_0 -> switch_0 -> gate_1 -> ... -> switch_{m-1} -> gate_m -> STOP

Each gate is a ring oscillator whose counter releases the signal once it has
seen ``ro_count_threshold`` oscillations.  Both clock counters start on
``trigger``; counter A stops on chain A's last gate, counter B on chain B's.
The counters are W bits wide and wrap, so ``count_a - count_b`` is the exact
difference modulo 2**W.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from unbiaspuf.errors import ConfigError

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

VERILOG_KEYWORDS = frozenset(
    """always and assign automatic begin buf case casex casez cell config deassign default defparam
    design disable edge else end endcase endconfig endfunction endgenerate endmodule endprimitive
    endspecify endtable endtask event for force forever fork function generate genvar highz0 highz1
    if ifnone initial inout input instance integer join large liblist library localparam macromodule
    medium module nand negedge nmos nor not notif0 notif1 or output parameter pmos posedge primitive
    pull0 pull1 pulldown pullup rcmos real realtime reg release repeat rnmos rpmos rtran rtranif0
    rtranif1 scalared signed small specify specparam strong0 strong1 supply0 supply1 table task time
    tran tranif0 tranif1 tri tri0 tri1 triand trior trireg unsigned use vectored wait wand weak0
    weak1 while wire wor xnor xor""".split()
)


@dataclass(frozen=True)
class RtlParams:
    challenge_width: int = 10
    register_width: int = 19
    ro_inverters: int = 19
    ro_count_threshold: int = 50_000
    module_name: str = "unbias_puf"

    def __post_init__(self):
        if self.challenge_width < 1:
            raise ConfigError("challenge_width must be >= 1")
        if self.register_width < 2:
            raise ConfigError("register_width must be >= 2")
        if self.ro_inverters < 3 or self.ro_inverters % 2 == 0:
            raise ConfigError(f"ro_inverters must be odd and >= 3, got {self.ro_inverters}")
        if self.ro_count_threshold < 1:
            raise ConfigError("ro_count_threshold must be positive")
        if not _IDENT.match(self.module_name) or self.module_name in VERILOG_KEYWORDS:
            raise ConfigError(f"{self.module_name!r} is not a valid Verilog identifier")

    @property
    def ro_count_width(self):
        return max(1, self.ro_count_threshold.bit_length())


def _ro_gate_module(p):
    name = f"{p.module_name}_ro_gate"
    return f"""\
// Ring oscillator with an oscillation counter.  sig_out rises once the
// counter reaches THRESHOLD after sig_in has risen; arm low clears it.
//
// The inverter loop below is a deliberate combinational loop.  A real
// implementation flow has to mark the stage nets as keep/don't-touch so the
// loop survives optimisation; no vendor attribute is emitted here, and no
// placement or routing constraint is needed.
module {name} #(
    parameter INVERTERS = {p.ro_inverters},
    parameter THRESHOLD = {p.ro_count_threshold},
    parameter COUNT_WIDTH = {p.ro_count_width}
) (
    input wire arm,
    input wire sig_in,
    output reg sig_out
);
    wire [INVERTERS-1:0] stage;
    wire run;
    reg [COUNT_WIDTH-1:0] count;

    assign run = arm & sig_in & ~sig_out;
    // NAND as the first inverter keeps an odd number of inversions
    assign stage[0] = ~(stage[INVERTERS-1] & run);

    genvar k;
    generate
        for (k = 1; k < INVERTERS; k = k + 1) begin : inverter
            assign stage[k] = ~stage[k-1];
        end
    endgenerate

    always @(posedge stage[INVERTERS-1] or negedge arm) begin
        if (!arm) begin
            count <= {{COUNT_WIDTH{{1'b0}}}};
            sig_out <= 1'b0;
        end else if (run) begin
            if (count == THRESHOLD - 1) begin
                sig_out <= 1'b1;
            end
            count <= count + 1'b1;
        end
    end
endmodule
"""


def _switch_module(p):
    return f"""\
// Path configuration: a 2x2 switch, straight when sel = 0, crossed when sel = 1.
module {p.module_name}_switch (
    input wire sel,
    input wire a_in,
    input wire b_in,
    output wire a_out,
    output wire b_out
);
    assign a_out = sel ? b_in : a_in;
    assign b_out = sel ? a_in : b_in;
endmodule
"""


def _top_module(p):
    m, w = p.challenge_width, p.register_width
    gate, switch = f"{p.module_name}_ro_gate", f"{p.module_name}_switch"
    lines = [
        f"// Strong UNBIAS PUF top level: {m} path configurations, {w}-bit difference register.",
        f"module {p.module_name} (",
        "    input wire clk,",
        "    input wire trigger,",
        f"    input wire [{m - 1}:0] challenge,",
        "    output wire done,",
        f"    output wire [{w - 1}:0] diff",
        ");",
        f"    localparam CHALLENGE_WIDTH = {m};",
        f"    localparam DIFF_WIDTH = {w};",
        f"    localparam RO_INVERTERS = {p.ro_inverters};",
        f"    localparam RO_THRESHOLD = {p.ro_count_threshold};",
        f"    localparam RO_COUNT_WIDTH = {p.ro_count_width};",
        "",
        "    // gate j sits in front of switch j; gate CHALLENGE_WIDTH drives STOP",
        f"    wire [CHALLENGE_WIDTH:0] a_gate_in;",
        f"    wire [CHALLENGE_WIDTH:0] b_gate_in;",
        f"    wire [CHALLENGE_WIDTH:0] a_gate_out;",
        f"    wire [CHALLENGE_WIDTH:0] b_gate_out;",
        "",
        "    assign a_gate_in[0] = trigger;",
        "    assign b_gate_in[0] = trigger;",
    ]
    for j in range(m + 1):
        for chain in "ab":
            lines += [
                "",
                f"    {gate} #(",
                "        .INVERTERS(RO_INVERTERS),",
                "        .THRESHOLD(RO_THRESHOLD),",
                "        .COUNT_WIDTH(RO_COUNT_WIDTH)",
                f"    ) ro_{chain}_{j} (",
                "        .arm(trigger),",
                f"        .sig_in({chain}_gate_in[{j}]),",
                f"        .sig_out({chain}_gate_out[{j}])",
                "    );",
            ]
        if j < m:
            lines += [
                "",
                f"    {switch} sw_{j} (",
                f"        .sel(challenge[{j}]),",
                f"        .a_in(a_gate_out[{j}]),",
                f"        .b_in(b_gate_out[{j}]),",
                f"        .a_out(a_gate_in[{j + 1}]),",
                f"        .b_out(b_gate_in[{j + 1}])",
                "    );",
            ]
    lines += [
        "",
        "    // START and STOP arrive asynchronously to clk",
        "    reg [1:0] start_sync;",
        "    reg [1:0] stop_a_sync;",
        "    reg [1:0] stop_b_sync;",
        "    always @(posedge clk) begin",
        "        start_sync <= {start_sync[0], trigger};",
        "        stop_a_sync <= {stop_a_sync[0], a_gate_out[CHALLENGE_WIDTH]};",
        "        stop_b_sync <= {stop_b_sync[0], b_gate_out[CHALLENGE_WIDTH]};",
        "    end",
        "",
        "    wire start;",
        "    wire stop_a;",
        "    wire stop_b;",
        "    assign start = start_sync[1];",
        "    assign stop_a = stop_a_sync[1];",
        "    assign stop_b = stop_b_sync[1];",
        "",
        "    reg [DIFF_WIDTH-1:0] count_a;",
        "    reg [DIFF_WIDTH-1:0] count_b;",
        "    always @(posedge clk) begin",
        "        if (!start) begin",
        "            count_a <= {DIFF_WIDTH{1'b0}};",
        "            count_b <= {DIFF_WIDTH{1'b0}};",
        "        end else begin",
        "            if (!stop_a) begin",
        "                count_a <= count_a + 1'b1;",
        "            end",
        "            if (!stop_b) begin",
        "                count_b <= count_b + 1'b1;",
        "            end",
        "        end",
        "    end",
        "",
        f"    reg [{w - 1}:0] diff_q;",
        "    reg done_q;",
        "    always @(posedge clk) begin",
        "        if (!start) begin",
        "            diff_q <= {DIFF_WIDTH{1'b0}};",
        "            done_q <= 1'b0;",
        "        end else if (stop_a && stop_b && !done_q) begin",
        "            diff_q <= count_a - count_b;",
        "            done_q <= 1'b1;",
        "        end",
        "    end",
        "",
        "    assign diff = diff_q;",
        "    assign done = done_q;",
        "endmodule",
        "",
    ]
    return "\n".join(lines)


def emit_rtl(params: RtlParams) -> str:
    header = (
        f"// {params.module_name}.v: generated by unbiaspuf.rtlgen, do not edit.\n"
        f"// challenge_width={params.challenge_width} register_width={params.register_width} "
        f"ro_inverters={params.ro_inverters} ro_count_threshold={params.ro_count_threshold}\n"
        "// Pure RTL: no placement, routing or timing constraints are part of this design.\n"
        "\n"
    )
    return header + "\n".join([_ro_gate_module(params), _switch_module(params), _top_module(params)])


def write_rtl(params: RtlParams, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(emit_rtl(params))


# --- structural lint -------------------------------------------------------

_TOKEN = re.compile(
    r"\s+"
    r"|(?P<num>\d*'[sS]?[bBoOdDhH][0-9a-fA-F_xXzZ]+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_$]*)"
    r"|(?P<op><=|>=|==|!=|&&|\|\||<<|>>|[-+*/%&|^~!?:;,.#@(){}\[\]<>=])"
)
_DECL = {"input", "output", "inout", "wire", "reg", "integer", "genvar", "parameter", "localparam"}
_PAIRS = {"module": "endmodule", "begin": "end", "generate": "endgenerate"}


def _strip_comments(text):
    text = re.sub(r"/\*.*?\*/", " ", text, flags=re.S)
    return re.sub(r"//[^\n]*", "", text)


def tokenize(text):
    text = _strip_comments(text)
    tokens, pos = [], 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match:
            raise ValueError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = match.lastgroup
        if kind:
            tokens.append((kind, match.group(kind)))
        pos = match.end()
    return tokens


def _skip_group(tokens, i, open_, close):
    depth = 0
    while i < len(tokens):
        if tokens[i][1] == open_:
            depth += 1
        elif tokens[i][1] == close:
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    raise ValueError(f"unbalanced {open_}{close}")


def _split_modules(tokens):
    modules, current = [], None
    for tok in tokens:
        if tok[1] == "module":
            current = []
        if current is not None:
            current.append(tok)
        if tok[1] == "endmodule" and current is not None:
            modules.append(current)
            current = None
    return modules


def lint_rtl(text):
    """Return a list of structural problems; empty means the text is clean.

    Checks keyword and bracket balance, duplicate declarations, undeclared
    identifiers, instantiations of undefined modules, and that every header
    port is declared with a direction.
    """
    try:
        tokens = tokenize(text)
    except ValueError as exc:
        return [str(exc)]
    problems = []
    words = [t[1] for t in tokens]
    for open_, close in _PAIRS.items():
        if words.count(open_) != words.count(close):
            problems.append(f"{words.count(open_)} {open_} vs {words.count(close)} {close}")
    for open_, close in ("()", "[]", "{}"):
        if words.count(open_) != words.count(close):
            problems.append(f"unbalanced {open_}{close}")
    if problems:
        return problems

    modules = _split_modules(tokens)
    defined = {}
    for mod in modules:
        name = mod[1][1]
        if name in defined:
            problems.append(f"module {name} defined twice")
        defined[name] = mod
    for name, mod in defined.items():
        problems += [f"{name}: {p}" for p in _lint_module(mod, set(defined))]
    return problems


def _lint_module(tokens, module_names):
    problems = []
    declared = {}
    ports = set()
    directions = set()
    i = 2

    def declare(ident, where):
        if ident in declared:
            problems.append(f"duplicate declaration of {ident}")
        declared[ident] = where

    # header: optional #( parameters ) then ( ports );
    if tokens[i][1] == "#":
        end = _skip_group(tokens, i + 1, "(", ")")
        i = end
    if tokens[i][1] == "(":
        end = _skip_group(tokens, i, "(", ")")
        for j in range(i + 1, end - 1):
            kind, word = tokens[j]
            if kind == "ident" and word not in VERILOG_KEYWORDS and tokens[j - 1][1] not in ("[", ":", "-", "+"):
                nxt = tokens[j + 1][1]
                if nxt in (",", ")"):
                    ports.add(word)

    j = 2
    while j < len(tokens):
        kind, word = tokens[j]
        if word in _DECL:
            j += 1
            while tokens[j][1] in ("wire", "reg", "signed"):
                j += 1
            if tokens[j][1] == "[":
                j = _skip_group(tokens, j, "[", "]")
            while True:
                ident = tokens[j][1]
                declare(ident, word)
                if word in ("input", "output", "inout"):
                    directions.add(ident)
                j += 1
                if tokens[j][1] == "=":
                    depth = 0
                    while not (depth == 0 and tokens[j][1] in (",", ";", ")")):
                        depth += {"(": 1, "{": 1, ")": -1, "}": -1}.get(tokens[j][1], 0)
                        j += 1
                if tokens[j][1] == "," and tokens[j + 1][0] == "ident" and tokens[j + 1][1] not in VERILOG_KEYWORDS:
                    j += 1
                    continue
                break
            continue
        if word == "begin" and tokens[j + 1][1] == ":":
            declare(tokens[j + 2][1], "block")
            j += 3
            continue
        if kind == "ident" and word not in VERILOG_KEYWORDS and tokens[j - 1][1] in (";", ")") and _is_instance(tokens, j):
            if word not in module_names:
                problems.append(f"instance of undefined module {word}")
            k = j + 1
            if tokens[k][1] == "#":
                k = _skip_group(tokens, k + 1, "(", ")")
            declare(tokens[k][1], "instance")
            j = _skip_group(tokens, k + 1, "(", ")")
            continue
        j += 1

    for port in sorted(ports - directions):
        problems.append(f"port {port} has no direction")
    for port in sorted(directions - ports):
        problems.append(f"{port} declared with a direction but missing from the port list")

    # every identifier used in the body must be declared here
    body_start = 2
    for j in range(body_start, len(tokens)):
        kind, word = tokens[j]
        if kind != "ident" or word in VERILOG_KEYWORDS or word in declared or word in module_names:
            continue
        if tokens[j - 1][1] == ".":
            continue
        problems.append(f"undeclared identifier {word}")
    return sorted(set(problems))


def _is_instance(tokens, j):
    k = j + 1
    if tokens[k][1] == "#":
        k = _skip_group(tokens, k + 1, "(", ")")
    return tokens[k][0] == "ident" and k + 1 < len(tokens) and tokens[k + 1][1] == "("


def check_parameter_fidelity(text, params: RtlParams):
    """Compare parameter literals found in the text with ``params``; returns mismatches."""
    expected = {
        "challenge": params.challenge_width - 1,
        "diff": params.register_width - 1,
        "CHALLENGE_WIDTH": params.challenge_width,
        "DIFF_WIDTH": params.register_width,
        "RO_INVERTERS": params.ro_inverters,
        "RO_THRESHOLD": params.ro_count_threshold,
        "INVERTERS": params.ro_inverters,
        "THRESHOLD": params.ro_count_threshold,
    }
    found = {}
    for name in ("challenge", "diff"):
        m = re.search(rf"(?:input|output) wire \[(\d+):0\] {name}\b", text)
        found[name] = int(m.group(1)) if m else None
    for name in ("CHALLENGE_WIDTH", "DIFF_WIDTH", "RO_INVERTERS", "RO_THRESHOLD", "INVERTERS", "THRESHOLD"):
        m = re.search(rf"\b(?:localparam|parameter) {name} = (\d+)", text)
        found[name] = int(m.group(1)) if m else None
    return {k: (found[k], v) for k, v in expected.items() if found[k] != v}

"""VHDL text generation for the sequential-input SNN accelerator.

Everything here is plain string assembly.  The emitted datapath never uses a
multiplication or exponent operator: decays are subtract-and-shift, ROM
addresses advance by increment, and every width that would need arithmetic is
computed here and written out as a literal.
"""
from __future__ import annotations

from ..network import QuantizedLayer, QuantizedModel
from ..simulator import MIN_OVERHEAD, TimingModel, layer_cycles, phase_table
from .coe import GenerationError

HEADER = """\
-- Generated by sfatti {version}. Do not edit by hand.
-- config {config_hash}, seed {seed}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
"""


def clog2(n: int) -> int:
    return max(1, (n - 1).bit_length())


def acc_width(qm: QuantizedModel, layer: QuantizedLayer) -> int:
    """Accumulator bits that can hold the decayed state plus every weight."""
    wb, mb = qm.weight_format.total_bits, qm.membrane_format.total_bits
    return max(mb, wb + clog2(layer.fan_in + 1)) + 2


def _bool(b: bool) -> str:
    return "true" if b else "false"


def package_source(head: str) -> str:
    return head + """
package snn_pkg is
  function saturate(x : signed; lo, hi : integer; width : natural) return signed;
  function shift_decay(x : signed; k : natural; pure : boolean) return signed;
end package snn_pkg;

package body snn_pkg is

  -- clip into [lo, hi] and narrow to width bits
  function saturate(x : signed; lo, hi : integer; width : natural) return signed is
  begin
    if x > to_signed(hi, x'length) then
      return to_signed(hi, width);
    elsif x < to_signed(lo, x'length) then
      return to_signed(lo, width);
    end if;
    return resize(x, width);
  end function;

  -- x - (x >> k), or x >> k when pure; arithmetic shift keeps the sign
  function shift_decay(x : signed; k : natural; pure : boolean) return signed is
  begin
    if pure then
      return shift_right(x, k);
    end if;
    return x - shift_right(x, k);
  end function;

end package body snn_pkg;
"""


def neuron_source(head: str) -> str:
    return head + """use work.snn_pkg.all;

-- One neuron. The accumulator always holds the decayed state for the next
-- timestep; 'add' folds in one weight, 'fire' saturates, compares and resets.
entity lif_neuron is
  generic (
    WB          : natural;
    MB          : natural;
    ACC_W       : natural;
    MEM_MIN     : integer;
    MEM_MAX     : integer;
    THRESHOLD   : integer;
    HAS_CURRENT : boolean;
    HAS_LEAK    : boolean;
    ALPHA_SHIFT : natural;
    BETA_SHIFT  : natural;
    PURE_SHIFT  : boolean;
    RESET_ZERO  : boolean
  );
  port (
    clk    : in  std_logic;
    rst    : in  std_logic;
    clear  : in  std_logic;
    add    : in  std_logic;
    fire   : in  std_logic;
    weight : in  signed(WB - 1 downto 0);
    spike  : out std_logic
  );
end entity lif_neuron;

architecture rtl of lif_neuron is
  signal acc : signed(ACC_W - 1 downto 0) := (others => '0');
  signal mem : signed(MB - 1 downto 0) := (others => '0');
  signal spk : std_logic := '0';
begin
  spike <= spk;

  process (clk)
    variable c : signed(MB - 1 downto 0);
    variable m : signed(ACC_W - 1 downto 0);
    variable u : signed(MB - 1 downto 0);
  begin
    if rising_edge(clk) then
      if rst = '1' or clear = '1' then
        acc <= (others => '0');
        mem <= (others => '0');
        spk <= '0';
      elsif add = '1' then
        acc <= acc + resize(weight, ACC_W);
      elsif fire = '1' then
        if HAS_CURRENT then
          c := saturate(acc, MEM_MIN, MEM_MAX, MB);
          if HAS_LEAK then
            m := resize(shift_decay(mem, BETA_SHIFT, PURE_SHIFT), ACC_W) + resize(c, ACC_W);
          else
            m := resize(mem, ACC_W) + resize(c, ACC_W);
          end if;
        else
          c := (others => '0');
          m := acc;
        end if;
        u := saturate(m, MEM_MIN, MEM_MAX, MB);
        if u > to_signed(THRESHOLD, MB) then
          spk <= '1';
          if RESET_ZERO then
            u := (others => '0');
          else
            u := saturate(resize(u, MB + 1) - to_signed(THRESHOLD, MB + 1), MEM_MIN, MEM_MAX, MB);
          end if;
        else
          spk <= '0';
        end if;
        mem <= u;
        if HAS_CURRENT then
          acc <= resize(shift_decay(c, ALPHA_SHIFT, PURE_SHIFT), ACC_W);
        elsif HAS_LEAK then
          acc <= resize(shift_decay(u, BETA_SHIFT, PURE_SHIFT), ACC_W);
        else
          acc <= resize(u, ACC_W);
        end if;
      end if;
    end if;
  end process;
end architecture rtl;
"""


def _row(values, wb: int) -> str:
    items = [f"to_signed({int(v)}, {wb})" for v in values]
    if len(items) == 1:
        return f"(0 => {items[0]})"
    return "(" + ", ".join(items) + ")"


def layer_source(head: str, qm: QuantizedModel, index: int) -> str:
    layer = qm.layers[index]
    lif = layer.lif
    wb = qm.weight_format.total_bits
    mb = qm.membrane_format.total_bits
    fi, fo = layer.fan_in, layer.fan_out
    # presynaptic-major: row p holds the weights leaving input p
    rows = [_row(layer.weights[:, p], wb) for p in range(fi)]
    if fi == 1:
        rom = f"    0 => {rows[0]}"
    else:
        rom = ",\n".join("    " + r for r in rows)
    name = f"snn_layer_{index}"
    return head + f"""
-- Layer {index}: {fi} inputs consumed one per cycle, {fo} {lif.order} neurons.
entity {name} is
  port (
    clk        : in  std_logic;
    rst        : in  std_logic;
    clear      : in  std_logic;
    acc_en     : in  std_logic;
    fire       : in  std_logic;
    in_spikes  : in  std_logic_vector({fi - 1} downto 0);
    out_spikes : out std_logic_vector({fo - 1} downto 0)
  );
end entity {name};

architecture rtl of {name} is
  type row_t is array (0 to {fo - 1}) of signed({wb - 1} downto 0);
  type rom_t is array (0 to {fi - 1}) of row_t;
  constant WEIGHTS : rom_t := (
{rom}
  );
  signal pre : natural range 0 to {fi - 1} := 0;
  signal row : row_t;
  signal add : std_logic;
begin
  row <= WEIGHTS(pre);
  add <= acc_en and in_spikes(pre);

  process (clk)
  begin
    if rising_edge(clk) then
      if rst = '1' or clear = '1' or fire = '1' then
        pre <= 0;
      elsif acc_en = '1' and pre /= {fi - 1} then
        pre <= pre + 1;
      end if;
    end if;
  end process;

  neurons : for j in 0 to {fo - 1} generate
    neuron : entity work.lif_neuron
      generic map (
        WB          => {wb},
        MB          => {mb},
        ACC_W       => {acc_width(qm, layer)},
        MEM_MIN     => {qm.membrane_format.min_raw},
        MEM_MAX     => {qm.membrane_format.max_raw},
        THRESHOLD   => {layer.threshold},
        HAS_CURRENT => {_bool(lif.alpha > 0)},
        HAS_LEAK    => {_bool(lif.beta > 0)},
        ALPHA_SHIFT => {lif.alpha_shift or 0},
        BETA_SHIFT  => {lif.beta_shift or 0},
        PURE_SHIFT  => {_bool(lif.pure_shift)},
        RESET_ZERO  => {_bool(lif.reset_mode == "zero")}
      )
      port map (
        clk    => clk,
        rst    => rst,
        clear  => clear,
        add    => add,
        fire   => fire,
        weight => row(j),
        spike  => out_spikes(j)
      );
  end generate neurons;
end architecture rtl;
"""


def control_source(head: str, qm: QuantizedModel, tm: TimingModel, timesteps: int) -> str:
    n_layers = len(qm.layers)
    cpt = tm.cycles_per_timestep
    setup = tm.setup_cycles
    phases = phase_table(qm.sizes)
    count_cycle = layer_cycles(qm.sizes)
    decode = []
    for li, (first, fire) in enumerate(phases):
        decode.append(
            f"  acc_en({li}) <= '1' when state = RUN and cyc >= {first} and cyc <= {fire - 1} else '0';"
        )
        decode.append(f"  fire({li}) <= '1' when state = RUN and cyc = {fire} else '0';")
    decode = "\n".join(decode)
    return head + f"""
-- Sequencer: {setup} setup cycles, then {timesteps} timesteps of {cpt} cycles.
-- Within a timestep each layer accumulates for fan_in cycles and fires once;
-- cycle {count_cycle} updates the output counters and the last cycle latches
-- the next input vector.
entity snn_control is
  port (
    clk    : in  std_logic;
    rst    : in  std_logic;
    start  : in  std_logic;
    clear  : out std_logic;
    latch  : out std_logic;
    count  : out std_logic;
    acc_en : out std_logic_vector({n_layers - 1} downto 0);
    fire   : out std_logic_vector({n_layers - 1} downto 0);
    done   : out std_logic
  );
end entity snn_control;

architecture rtl of snn_control is
  type state_t is (IDLE, SETUP, RUN, FINISH);
  signal state : state_t := IDLE;
  signal scnt  : natural range 0 to {setup} := 0;
  signal cyc   : natural range 0 to {cpt - 1} := 0;
  signal ts    : natural range 0 to {timesteps - 1} := 0;
begin
  clear <= '1' when state = SETUP and scnt = 1 else '0';
  latch <= '1' when (state = SETUP and scnt = {setup})
                 or (state = RUN and cyc = {cpt - 1} and ts /= {timesteps - 1}) else '0';
  count <= '1' when state = RUN and cyc = {count_cycle} else '0';
{decode}
  done <= '1' when state = FINISH else '0';

  process (clk)
  begin
    if rising_edge(clk) then
      if rst = '1' then
        state <= IDLE;
        scnt <= 0;
        cyc <= 0;
        ts <= 0;
      else
        case state is
          when IDLE | FINISH =>
            if start = '1' then
              state <= SETUP;
              scnt <= 1;
            end if;
          when SETUP =>
            if scnt = {setup} then
              state <= RUN;
              cyc <= 0;
              ts <= 0;
            else
              scnt <= scnt + 1;
            end if;
          when RUN =>
            if cyc = {cpt - 1} then
              cyc <= 0;
              if ts = {timesteps - 1} then
                state <= FINISH;
              else
                ts <= ts + 1;
              end if;
            else
              cyc <= cyc + 1;
            end if;
        end case;
      end if;
    end if;
  end process;
end architecture rtl;
"""


def top_ports(qm: QuantizedModel) -> list[tuple[str, str, str]]:
    """(name, direction, type) for every top-level port."""
    label_bits = clog2(qm.output_size)
    return [
        ("clk", "in", "std_logic"),
        ("rst", "in", "std_logic"),
        ("start", "in", "std_logic"),
        ("in_spikes", "in", f"std_logic_vector({qm.input_size - 1} downto 0)"),
        ("in_req", "out", "std_logic"),
        ("ready", "out", "std_logic"),
        ("label_out", "out", f"std_logic_vector({label_bits - 1} downto 0)"),
    ]


def top_source(head: str, qm: QuantizedModel, timesteps: int, top_name: str) -> str:
    n_layers = len(qm.layers)
    n_out = qm.output_size
    cnt_bits = clog2(timesteps + 1)
    label_bits = clog2(n_out)
    ports = top_ports(qm)
    port_lines = ";\n".join(f"    {n:<9} : {d:<3} {t}" for n, d, t in ports)
    signals = [f"  signal spikes_{li} : std_logic_vector({l.fan_out - 1} downto 0);"
               for li, l in enumerate(qm.layers)]
    insts = []
    for li in range(n_layers):
        src = "in_reg" if li == 0 else f"spikes_{li - 1}"
        insts.append(f"""  layer_{li} : entity work.snn_layer_{li}
    port map (
      clk        => clk,
      rst        => rst,
      clear      => clear,
      acc_en     => acc_en({li}),
      fire       => fire({li}),
      in_spikes  => {src},
      out_spikes => spikes_{li}
    );""")
    last = f"spikes_{n_layers - 1}"
    return head + f"""
-- Top level. in_spikes is a parallel port, one line per input neuron; a
-- dual-buffer front end swaps buffers on each in_req pulse so loading the next
-- timestep overlaps computation and adds no latency.
entity {top_name} is
  port (
{port_lines}
  );
end entity {top_name};

architecture rtl of {top_name} is
  type count_t is array (0 to {n_out - 1}) of unsigned({cnt_bits - 1} downto 0);
  signal in_reg : std_logic_vector({qm.input_size - 1} downto 0) := (others => '0');
  signal clear, latch, count, done : std_logic;
  signal acc_en, fire : std_logic_vector({n_layers - 1} downto 0);
{chr(10).join(signals)}
  signal counts : count_t := (others => (others => '0'));
begin
  control : entity work.snn_control
    port map (
      clk    => clk,
      rst    => rst,
      start  => start,
      clear  => clear,
      latch  => latch,
      count  => count,
      acc_en => acc_en,
      fire   => fire,
      done   => done
    );

{chr(10).join(insts)}

  process (clk)
  begin
    if rising_edge(clk) then
      if latch = '1' then
        in_reg <= in_spikes;
      end if;
      if rst = '1' or clear = '1' then
        counts <= (others => (others => '0'));
      elsif count = '1' then
        for j in 0 to {n_out - 1} loop
          if {last}(j) = '1' then
            counts(j) <= counts(j) + 1;
          end if;
        end loop;
      end if;
    end if;
  end process;

  -- spike-count argmax, strict compare keeps the lowest index on ties
  process (counts)
    variable best : natural range 0 to {n_out - 1};
  begin
    best := 0;
    for j in 1 to {n_out - 1} loop
      if counts(j) > counts(best) then
        best := j;
      end if;
    end loop;
    label_out <= std_logic_vector(to_unsigned(best, {label_bits}));
  end process;

  in_req <= latch;
  ready <= done;
end architecture rtl;
"""


def check_topology(qm: QuantizedModel, tm: TimingModel):
    used = MIN_OVERHEAD
    for li, layer in enumerate(qm.layers):
        if layer.fan_in < 1 or layer.fan_out < 1:
            raise GenerationError(f"layer {li}: empty layer ({layer.fan_in}->{layer.fan_out})")
        used += layer.fan_in + 1
        if used > tm.cycles_per_timestep:
            raise GenerationError(
                f"layer {li}: schedule needs more than {tm.cycles_per_timestep} cycles per timestep"
            )
    if qm.output_size < 2:
        raise GenerationError(f"layer {len(qm.layers) - 1}: classifier needs at least 2 outputs")

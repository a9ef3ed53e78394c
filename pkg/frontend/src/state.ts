// UI state machine. Pure of DOM and network so the invariants are
// directly testable: at most one in-flight request, transcript
// append-only, and no path that drops a received reply.

export type Turn =
  | { kind: "user"; text: string }
  | {
      kind: "bot";
      text: string;
      topTokens: string[];
      waitSeconds: number;
      revealed: boolean;
    }
  | { kind: "error"; text: string };

export interface UiState {
  domains: string[];
  selectedDomain: string | null;
  sessionId: string;
  transcript: Turn[];
  pending: boolean;
  banner: string | null;
  pacingEnabled: boolean;
}

export type Listener = (state: UiState) => void;

function newSessionId(): string {
  return `web-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 8)}`;
}

export class Store {
  private state: UiState = {
    domains: [],
    selectedDomain: null,
    sessionId: newSessionId(),
    transcript: [],
    pending: false,
    banner: null,
    pacingEnabled: true,
  };
  private listeners: Listener[] = [];

  getState(): UiState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  setDomains(domains: string[]): void {
    const keep = this.state.selectedDomain;
    const selected = keep && domains.includes(keep) ? keep : domains[0] ?? null;
    this.state = { ...this.state, domains, selectedDomain: selected, banner: null };
    this.emit();
  }

  /** Selecting a domain starts a fresh session and transcript. */
  selectDomain(domain: string): void {
    if (domain === this.state.selectedDomain) {
      return;
    }
    this.state = {
      ...this.state,
      selectedDomain: domain,
      sessionId: newSessionId(),
      transcript: [],
      pending: false,
    };
    this.emit();
  }

  setBanner(message: string): void {
    this.state = { ...this.state, banner: message };
    this.emit();
  }

  setPacing(enabled: boolean): void {
    this.state = { ...this.state, pacingEnabled: enabled };
    this.emit();
  }

  canSend(text: string): boolean {
    return !this.state.pending && text.trim().length > 0
      && this.state.selectedDomain !== null;
  }

  /** Appends the user turn and locks the input; false if not allowed. */
  beginSend(text: string): boolean {
    if (!this.canSend(text)) {
      return false;
    }
    this.state = {
      ...this.state,
      pending: true,
      transcript: [...this.state.transcript, { kind: "user", text: text.trim() }],
    };
    this.emit();
    return true;
  }

  /** Records a received reply; returns its transcript index. */
  completeSend(reply: string, topTokens: string[], waitSeconds: number): number {
    const revealed = !this.state.pacingEnabled || waitSeconds <= 0;
    const turn: Turn = {
      kind: "bot",
      text: reply,
      topTokens,
      waitSeconds,
      revealed,
    };
    this.state = {
      ...this.state,
      pending: false,
      transcript: [...this.state.transcript, turn],
    };
    this.emit();
    return this.state.transcript.length - 1;
  }

  /** Inline error turn; earlier transcript is preserved, input re-enabled. */
  failSend(message: string): void {
    this.state = {
      ...this.state,
      pending: false,
      transcript: [...this.state.transcript, { kind: "error", text: message }],
    };
    this.emit();
  }

  reveal(index: number): void {
    const turn = this.state.transcript[index];
    if (!turn || turn.kind !== "bot" || turn.revealed) {
      return;
    }
    const transcript = this.state.transcript.slice();
    transcript[index] = { ...turn, revealed: true };
    this.state = { ...this.state, transcript };
    this.emit();
  }
}

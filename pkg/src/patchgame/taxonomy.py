"""Cyber Kill Chain stages, ATT&CK Enterprise tactics and the technique catalog."""

from __future__ import annotations

from enum import Enum, IntEnum
from typing import Dict, Tuple


class CkcStage(IntEnum):
    RECONNAISSANCE = 0
    WEAPONIZATION = 1
    DELIVERY = 2
    EXPLOITATION = 3
    INSTALLATION = 4
    COMMAND_AND_CONTROL = 5
    ACTIONS_ON_OBJECTIVES = 6

    @property
    def label(self) -> str:
        return _STAGE_LABELS[self]

    @classmethod
    def parse(cls, value: "str | int | CkcStage") -> "CkcStage":
        if isinstance(value, CkcStage):
            return value
        if isinstance(value, int):
            return cls(value)
        key = value.strip().upper().replace(" ", "_").replace("&", "AND")
        return cls[key]


_STAGE_LABELS = {
    CkcStage.RECONNAISSANCE: "Reconnaissance",
    CkcStage.WEAPONIZATION: "Weaponization",
    CkcStage.DELIVERY: "Delivery",
    CkcStage.EXPLOITATION: "Exploitation",
    CkcStage.INSTALLATION: "Installation",
    CkcStage.COMMAND_AND_CONTROL: "Command & Control",
    CkcStage.ACTIONS_ON_OBJECTIVES: "Actions on Objectives",
}


class Tactic(Enum):
    RECONNAISSANCE = "TA0043"
    RESOURCE_DEVELOPMENT = "TA0042"
    INITIAL_ACCESS = "TA0001"
    DISCOVERY = "TA0007"
    EXECUTION = "TA0002"
    CREDENTIAL_ACCESS = "TA0006"
    LATERAL_MOVEMENT = "TA0008"
    PERSISTENCE = "TA0003"
    PRIVILEGE_ESCALATION = "TA0004"
    DEFENSE_EVASION = "TA0005"
    COMMAND_AND_CONTROL = "TA0011"
    COLLECTION = "TA0009"
    EXFILTRATION = "TA0010"
    IMPACT = "TA0040"

    @property
    def stage(self) -> CkcStage:
        return TACTIC_STAGE[self]

    @property
    def label(self) -> str:
        return self.name.replace("_", " ").title().replace("And", "and")

    @classmethod
    def parse(cls, value: "str | Tactic") -> "Tactic":
        if isinstance(value, Tactic):
            return value
        text = value.strip()
        try:
            return cls(text)
        except ValueError:
            return cls[text.upper().replace(" ", "_").replace("&", "AND")]


# Row order of the ATT&CK -> kill chain mapping table.
TACTIC_STAGE: Dict[Tactic, CkcStage] = {
    Tactic.RECONNAISSANCE: CkcStage.RECONNAISSANCE,
    Tactic.RESOURCE_DEVELOPMENT: CkcStage.WEAPONIZATION,
    Tactic.INITIAL_ACCESS: CkcStage.DELIVERY,
    Tactic.DISCOVERY: CkcStage.DELIVERY,
    Tactic.EXECUTION: CkcStage.EXPLOITATION,
    Tactic.CREDENTIAL_ACCESS: CkcStage.EXPLOITATION,
    Tactic.LATERAL_MOVEMENT: CkcStage.EXPLOITATION,
    Tactic.PERSISTENCE: CkcStage.INSTALLATION,
    Tactic.PRIVILEGE_ESCALATION: CkcStage.INSTALLATION,
    Tactic.DEFENSE_EVASION: CkcStage.INSTALLATION,
    Tactic.COMMAND_AND_CONTROL: CkcStage.COMMAND_AND_CONTROL,
    Tactic.COLLECTION: CkcStage.ACTIONS_ON_OBJECTIVES,
    Tactic.EXFILTRATION: CkcStage.ACTIONS_ON_OBJECTIVES,
    Tactic.IMPACT: CkcStage.ACTIONS_ON_OBJECTIVES,
}


def tactic_to_stage(tactic: Tactic) -> CkcStage:
    return TACTIC_STAGE[tactic]


def tactics_for_stage(stage: CkcStage) -> Tuple[Tactic, ...]:
    """Candidate tactics for a stage, in table order."""
    return tuple(t for t in Tactic if TACTIC_STAGE[t] == stage)


# Technique -> primary tactic. Techniques listed under several tactics in
# ATT&CK are pinned to the one they play in exploitation-driven campaigns.
TECHNIQUES: Dict[str, Tactic] = {
    "T1595": Tactic.RECONNAISSANCE,        # Active Scanning
    "T1592": Tactic.RECONNAISSANCE,        # Gather Victim Host Information
    "T1583": Tactic.RESOURCE_DEVELOPMENT,  # Acquire Infrastructure
    "T1587": Tactic.RESOURCE_DEVELOPMENT,  # Develop Capabilities
    "T1588": Tactic.RESOURCE_DEVELOPMENT,  # Obtain Capabilities
    "T1190": Tactic.INITIAL_ACCESS,        # Exploit Public-Facing Application
    "T1133": Tactic.INITIAL_ACCESS,        # External Remote Services
    "T1189": Tactic.INITIAL_ACCESS,        # Drive-by Compromise
    "T1566": Tactic.INITIAL_ACCESS,        # Phishing
    "T1078": Tactic.INITIAL_ACCESS,        # Valid Accounts
    "T1046": Tactic.DISCOVERY,             # Network Service Discovery
    "T1082": Tactic.DISCOVERY,             # System Information Discovery
    "T1203": Tactic.EXECUTION,             # Exploitation for Client Execution
    "T1059": Tactic.EXECUTION,             # Command and Scripting Interpreter
    "T1212": Tactic.CREDENTIAL_ACCESS,     # Exploitation for Credential Access
    "T1003": Tactic.CREDENTIAL_ACCESS,     # OS Credential Dumping
    "T1552": Tactic.CREDENTIAL_ACCESS,     # Unsecured Credentials
    "T1110": Tactic.CREDENTIAL_ACCESS,     # Brute Force
    "T1210": Tactic.LATERAL_MOVEMENT,      # Exploitation of Remote Services
    "T1021": Tactic.LATERAL_MOVEMENT,      # Remote Services
    "T1505": Tactic.PERSISTENCE,           # Server Software Component
    "T1547": Tactic.PERSISTENCE,           # Boot or Logon Autostart Execution
    "T1053": Tactic.PERSISTENCE,           # Scheduled Task/Job
    "T1068": Tactic.PRIVILEGE_ESCALATION,  # Exploitation for Privilege Escalation
    "T1211": Tactic.DEFENSE_EVASION,       # Exploitation for Defense Evasion
    "T1055": Tactic.DEFENSE_EVASION,       # Process Injection
    "T1071": Tactic.COMMAND_AND_CONTROL,   # Application Layer Protocol
    "T1105": Tactic.COMMAND_AND_CONTROL,   # Ingress Tool Transfer
    "T1005": Tactic.COLLECTION,            # Data from Local System
    "T1041": Tactic.EXFILTRATION,          # Exfiltration Over C2 Channel
    "T1486": Tactic.IMPACT,                # Data Encrypted for Impact
    "T1489": Tactic.IMPACT,                # Service Stop
    "T1499": Tactic.IMPACT,                # Endpoint Denial of Service
}

# Default technique used when a graph edge of a given tactic has no mapped technique.
DEFAULT_TECHNIQUE: Dict[Tactic, str] = {
    Tactic.RECONNAISSANCE: "T1595",
    Tactic.RESOURCE_DEVELOPMENT: "T1588",
    Tactic.INITIAL_ACCESS: "T1190",
    Tactic.DISCOVERY: "T1046",
    Tactic.EXECUTION: "T1203",
    Tactic.CREDENTIAL_ACCESS: "T1212",
    Tactic.LATERAL_MOVEMENT: "T1021",
    Tactic.PERSISTENCE: "T1505",
    Tactic.PRIVILEGE_ESCALATION: "T1068",
    Tactic.DEFENSE_EVASION: "T1211",
    Tactic.COMMAND_AND_CONTROL: "T1071",
    Tactic.COLLECTION: "T1005",
    Tactic.EXFILTRATION: "T1041",
    Tactic.IMPACT: "T1486",
}


def technique_tactic(technique_id: str) -> Tactic:
    try:
        return TECHNIQUES[technique_id]
    except KeyError:
        raise KeyError(f"unknown ATT&CK technique {technique_id!r}") from None


# Kill-chain phases reported in the per-strategy stage success table.
REPORT_PHASES: Dict[str, Tuple[Tactic, ...]] = {
    "initial_access": (Tactic.INITIAL_ACCESS,),
    "lateral_movement": (Tactic.LATERAL_MOVEMENT,),
    "privilege_escalation": (Tactic.PRIVILEGE_ESCALATION,),
    "persistence": (Tactic.PERSISTENCE,),
    "exfiltration": (Tactic.EXFILTRATION,),
}

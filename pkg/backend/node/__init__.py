# Organization node package
from .org_node import BadClientSignature, OrgNode, ProposalError
